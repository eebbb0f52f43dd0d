#include "oxysense/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <thread>

#include "oxysense/io.hpp"
#include "oxysense/rng.hpp"

namespace oxysense {

std::vector<AbsError> ae_per_observation(const NetworkModel& model, const Dataset& data) {
    if (data.size() == 0) throw std::invalid_argument("ae_per_observation: dataset is empty");
    const Eigen::VectorXd preds = forward_batch(model, data.features_cols());
    std::vector<AbsError> table;
    table.reserve(data.size());
    for (std::size_t j = 0; j < data.size(); ++j) {
        const double measured = data.observations()[j].o2.percent_air();
        const double predicted = preds(static_cast<Eigen::Index>(j));
        table.push_back({measured, predicted, std::abs(predicted - measured)});
    }
    return table;
}

double mae(const NetworkModel& model, const Dataset& data) {
    const std::vector<AbsError> table = ae_per_observation(model, data);
    double sum = 0.0;
    for (const auto& rec : table) sum += rec.ae;
    return sum / static_cast<double>(table.size());
}

EvalReport run_sweep(const SweepGrid& grid, const Dataset& train_data, const Dataset& dev_data,
                     const Dataset& test_data, int workers) {
    if (grid.layer_counts.empty() || grid.neuron_counts.empty())
        throw std::invalid_argument("run_sweep: the grid must not be empty");
    for (int v : grid.layer_counts)
        if (v < 1) throw std::invalid_argument("run_sweep: layer counts must be >= 1");
    for (int v : grid.neuron_counts)
        if (v < 1) throw std::invalid_argument("run_sweep: neuron counts must be >= 1");
    const auto same_grid = [&](const Dataset& d) {
        return d.frequencies_hz().size() == train_data.frequencies_hz().size() &&
               (d.frequencies_hz().array() == train_data.frequencies_hz().array()).all();
    };
    if (!same_grid(dev_data) || !same_grid(test_data))
        throw std::invalid_argument("run_sweep: datasets do not share the frequency grid");
    workers = std::max(1, workers);

    struct Cell {
        int layers;
        int neurons;
    };
    std::vector<Cell> cells;
    for (int layers : grid.layer_counts)
        for (int neurons : grid.neuron_counts) cells.push_back({layers, neurons});
    std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
        return a.layers != b.layers ? a.layers < b.layers : a.neurons < b.neurons;
    });

    EvalReport report;
    report.rows.resize(cells.size());

    const auto run_trial = [&](std::size_t idx) {
        const Cell cell = cells[idx];
        SweepRow row;
        row.layers = cell.layers;
        row.neurons = cell.neurons;
        row.seed = rng::combine(rng::combine(grid.base_seed, static_cast<std::uint64_t>(cell.layers)),
                                static_cast<std::uint64_t>(cell.neurons));
        TrainConfig cfg = grid.trial_config;
        cfg.seed = row.seed;
        row.epochs = cfg.epochs;
        const NetworkSpec spec{train_data.frequencies_hz().size(), cell.layers, cell.neurons,
                               110.0};
        try {
            auto [model, train_report] = train(spec, train_data, cfg);
            row.mae_train = mae(model, train_data);
            row.mae_dev = mae(model, dev_data);
            row.mae_test = mae(model, test_data);
            row.duration_s = train_report.duration_seconds;
            row.status = "ok";
        } catch (const TrainingDivergedError&) {
            const double nan = std::numeric_limits<double>::quiet_NaN();
            row.mae_train = row.mae_dev = row.mae_test = nan;
            row.duration_s = 0.0;
            row.status = "diverged";
        }
        report.rows[idx] = std::move(row);
    };

    if (workers == 1) {
        for (std::size_t i = 0; i < cells.size(); ++i) run_trial(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                while (true) {
                    const std::size_t idx = next.fetch_add(1);
                    if (idx >= cells.size()) return;
                    run_trial(idx);
                }
            });
        }
        for (auto& t : pool) t.join();
    }
    return report;
}

std::vector<BinStat> concentration_profile(const NetworkModel& model, const Dataset& data,
                                           const std::vector<double>& bin_edges) {
    if (bin_edges.size() < 2)
        throw std::invalid_argument("concentration_profile: need at least two bin edges");
    for (std::size_t i = 1; i < bin_edges.size(); ++i) {
        if (!(bin_edges[i] > bin_edges[i - 1]))
            throw std::invalid_argument("concentration_profile: bin edges must be increasing");
    }
    const std::vector<AbsError> table = ae_per_observation(model, data);
    for (const auto& rec : table) {
        if (rec.o2_measured < bin_edges.front() || rec.o2_measured > bin_edges.back())
            throw std::invalid_argument("concentration_profile: bins do not cover the label range");
    }

    const std::size_t n_bins = bin_edges.size() - 1;
    std::vector<std::vector<double>> per_bin(n_bins);
    for (const auto& rec : table) {
        std::size_t k = n_bins - 1;  // the last bin is closed on the right
        for (std::size_t b = 0; b + 1 < n_bins; ++b) {
            if (rec.o2_measured < bin_edges[b + 1]) {
                k = b;
                break;
            }
        }
        per_bin[k].push_back(rec.ae);
    }

    std::vector<BinStat> bins;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t k = 0; k < n_bins; ++k) {
        BinStat stat{bin_edges[k], bin_edges[k + 1], per_bin[k].size(), nan, nan, nan};
        if (!per_bin[k].empty()) {
            auto& aes = per_bin[k];
            double sum = 0.0, mx = 0.0;
            for (double ae : aes) {
                sum += ae;
                mx = std::max(mx, ae);
            }
            std::sort(aes.begin(), aes.end());
            const std::size_t n = aes.size();
            stat.mean_ae = sum / static_cast<double>(n);
            stat.median_ae = n % 2 == 1 ? aes[n / 2] : 0.5 * (aes[n / 2 - 1] + aes[n / 2]);
            stat.max_ae = mx;
        }
        bins.push_back(stat);
    }
    return bins;
}

void write_sweep_csv(const EvalReport& report, const std::filesystem::path& path) {
    std::string body = "layers,neurons,seed,mae_train,mae_dev,mae_test,epochs,duration_s,status\n";
    for (const auto& row : report.rows) {
        char duration[32];
        std::snprintf(duration, sizeof duration, "%.3f", row.duration_s);
        body += std::to_string(row.layers) + ',' + std::to_string(row.neurons) + ',' +
                std::to_string(row.seed) + ',' + io::format_double(row.mae_train) + ',' +
                io::format_double(row.mae_dev) + ',' + io::format_double(row.mae_test) + ',' +
                std::to_string(row.epochs) + ',' + duration + ',' + row.status + '\n';
    }
    io::write_text_file(path, body);
}

std::string sweep_summary(const EvalReport& report) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "%7s %8s %12s %12s %12s %10s %8s\n", "layers", "neurons",
                  "mae_train", "mae_dev", "mae_test", "time_s", "status");
    out << line;
    for (const auto& row : report.rows) {
        std::snprintf(line, sizeof line, "%7d %8d %12.4f %12.4f %12.4f %10.1f %8s\n", row.layers,
                      row.neurons, row.mae_train, row.mae_dev, row.mae_test, row.duration_s,
                      row.status.c_str());
        out << line;
    }
    return out.str();
}

void write_profile_csv(const std::vector<BinStat>& bins, const std::filesystem::path& path) {
    std::string body = "bin_lo,bin_hi,count,mean_ae,median_ae,max_ae\n";
    for (const auto& b : bins) {
        body += io::format_double(b.lo) + ',' + io::format_double(b.hi) + ',' +
                std::to_string(b.count) + ',';
        if (b.count > 0) {
            body += io::format_double(b.mean_ae) + ',' + io::format_double(b.median_ae) + ',' +
                    io::format_double(b.max_ae);
        } else {
            body += ",,";  // statistics omitted for empty bins
        }
        body += '\n';
    }
    io::write_text_file(path, body);
}

void write_ae_csv(const std::vector<AbsError>& table, const std::filesystem::path& path) {
    std::string body = "o2_measured,o2_predicted,ae\n";
    for (const auto& rec : table) {
        body += io::format_double(rec.o2_measured) + ',' + io::format_double(rec.o2_predicted) +
                ',' + io::format_double(rec.ae) + '\n';
    }
    io::write_text_file(path, body);
}

}  // namespace oxysense
