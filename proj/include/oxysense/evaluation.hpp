#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "oxysense/dataset.hpp"
#include "oxysense/network.hpp"

namespace oxysense {

struct AbsError {
    double o2_measured;
    double o2_predicted;
    double ae;
};

/// Absolute error per observation, in stored order.
std::vector<AbsError> ae_per_observation(const NetworkModel& model, const Dataset& data);

/// Mean absolute error; exactly the mean of ae_per_observation in the same
/// summation order.
double mae(const NetworkModel& model, const Dataset& data);

/// Architecture grid for the sweep. Each (layers, neurons) cell trains once
/// with seed = hash(base_seed, layers, neurons), so adding cells never
/// changes existing trials. The per-trial epochs default to the CI scale.
struct SweepGrid {
    std::vector<int> layer_counts = {1, 2, 3};
    std::vector<int> neuron_counts = {3, 5, 10, 20, 30, 50};
    TrainConfig trial_config = {.learning_rate = 0.001, .epochs = 20000, .seed = 0};
    std::uint64_t base_seed = 0;
};

struct SweepRow {
    int layers = 0;
    int neurons = 0;
    std::uint64_t seed = 0;
    double mae_train = 0.0;
    double mae_dev = 0.0;
    double mae_test = 0.0;
    long epochs = 0;
    double duration_s = 0.0;
    std::string status;  // "ok" or "diverged"
};

struct EvalReport {
    std::vector<SweepRow> rows;  // sorted by (layers, neurons)
};

/// One full training per grid cell; rows sorted by (layers, neurons) and
/// bit-identical regardless of worker count (durations excepted, being
/// wall-clock). A diverged trial is flagged and the sweep continues.
EvalReport run_sweep(const SweepGrid& grid, const Dataset& train_data, const Dataset& dev_data,
                     const Dataset& test_data, int workers = 1);

struct BinStat {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
    double mean_ae = 0.0;    // NaN when count == 0
    double median_ae = 0.0;  // NaN when count == 0
    double max_ae = 0.0;     // NaN when count == 0
};

/// Per-bin AE summary over [edges[k], edges[k+1]) (last bin closed). The
/// edges must cover the label range.
std::vector<BinStat> concentration_profile(const NetworkModel& model, const Dataset& data,
                                           const std::vector<double>& bin_edges);

/// CSV header: layers,neurons,seed,mae_train,mae_dev,mae_test,epochs,duration_s,status
void write_sweep_csv(const EvalReport& report, const std::filesystem::path& path);
/// Aligned-text sweep table for humans.
std::string sweep_summary(const EvalReport& report);

/// CSV header: bin_lo,bin_hi,count,mean_ae,median_ae,max_ae
void write_profile_csv(const std::vector<BinStat>& bins, const std::filesystem::path& path);
/// CSV header: o2_measured,o2_predicted,ae
void write_ae_csv(const std::vector<AbsError>& table, const std::filesystem::path& path);

}  // namespace oxysense
