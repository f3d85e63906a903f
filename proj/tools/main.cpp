#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "oplab/config.hpp"
#include "oplab/studio.hpp"
#include "oplab/trainer.hpp"

namespace fs = std::filesystem;
using namespace oplab;

namespace {

fs::path resolve_output(const std::string& dir) {
    fs::path p(dir);
    if (p.is_absolute()) return p;
    const char* root = std::getenv("OPLAB_OUTPUT_ROOT");
    return root != nullptr ? fs::path(root) / p : p;
}

ChoiceConfig load_base_config(const std::string& config_path, const std::vector<std::string>& overrides) {
    ChoiceConfig cfg = config_path.empty() ? ChoiceConfig{} : load_config_file(config_path);
    for (const std::string& kv : overrides) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got: " + kv);
        std::string key = kv.substr(0, eq);
        std::string value = kv.substr(eq + 1);
        auto trim = [](std::string& s) {
            const size_t a = s.find_first_not_of(" \t");
            const size_t b = s.find_last_not_of(" \t");
            s = a == std::string::npos ? "" : s.substr(a, b - a + 1);
        };
        trim(key);
        trim(value);
        cfg.set(key, value);
    }
    cfg.validate();
    return cfg;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides, uint64_t seed,
              const std::string& out_dir) {
    const ChoiceConfig cfg = load_base_config(config_path, overrides);
    const fs::path out = resolve_output(out_dir);
    fs::create_directories(out);

    Trainer trainer(cfg, seed);
    const RunResult result = trainer.run();

    Trainer::write_metrics_csv((out / "metrics.csv").string(), result.metrics);
    trainer.write_summary_json((out / "summary.json").string(), result);
    trainer.save_checkpoint((out / "checkpoint.json").string());
    {
        std::ofstream f(out / "config.txt");
        f << serialize_config(cfg);
    }
    std::cout << "score " << format_double(result.score) << (result.failed ? " (failed run)" : "") << "\n";
    return 0;
}

ChoiceSpace load_space(const std::string& preset, const std::string& space_path) {
    if (!preset.empty()) return ChoiceSpace::preset(preset);
    if (!space_path.empty()) return ChoiceSpace::load(space_path);
    throw std::invalid_argument("either --preset or --space is required");
}

int cmd_study(const std::string& preset, const std::string& space_path, const std::string& config_path,
              const std::vector<std::string>& overrides, int n_configs, int seeds, int workers, uint64_t study_seed,
              const std::string& out_dir) {
    const ChoiceSpace space = load_space(preset, space_path);
    StudyOptions opts;
    opts.n_configs = n_configs;
    opts.seeds = seeds;
    opts.workers = workers;
    opts.study_seed = study_seed;
    opts.base = load_base_config(config_path, overrides);

    const fs::path out = resolve_output(out_dir);
    fs::create_directories(out);
    {
        std::ofstream f(out / "space.json");
        f << space.to_json() << '\n';
        std::ofstream c(out / "base_config.txt");
        c << serialize_config(opts.base);
    }
    const std::vector<StudyRecord> records = run_study(space, opts, (out / "records.jsonl").string());
    std::cout << "study complete: " << records.size() << " configurations recorded\n";
    return 0;
}

double compute_random_baseline(const ChoiceConfig& base) {
    Trainer trainer(base, 0);
    return trainer.evaluate(100, Rng(424242));
}

int cmd_analyze(const std::string& records_path, const std::string& preset, const std::string& space_path,
                const std::string& config_path, const std::string& choice, const std::string& out_dir) {
    const ChoiceSpace space = load_space(preset, space_path);
    const ChoiceDef* def = space.find(choice);
    if (def == nullptr) throw std::invalid_argument("unknown choice name: " + choice);
    const std::vector<StudyRecord> records = load_records(records_path);
    if (records.empty()) throw std::runtime_error("no usable records in " + records_path);

    const fs::path out = resolve_output(out_dir);
    fs::create_directories(out);

    std::ofstream csv(out / ("p95_" + choice + ".csv"));
    csv << "value,p95,ci_low,ci_high,n\n";
    std::vector<BarItem> bars;
    for (const std::string& value : def->values) {
        const auto est = conditional_percentile(records, choice, value);
        if (!est) {
            csv << value << ",,,,0\n";
            continue;
        }
        csv << value << ',' << format_double(est->point) << ',' << format_double(est->low) << ','
            << format_double(est->high) << ',' << est->n << '\n';
        bars.push_back(BarItem{value, est->point, est->low, est->high});
    }
    write_bar_chart_svg((out / ("p95_" + choice + ".svg")).string(), "95th percentile by " + choice, bars, true);

    const auto hist = top_fraction_distribution(records, choice);
    std::ofstream hcsv(out / ("top5_" + choice + ".csv"));
    hcsv << "value,frequency\n";
    std::vector<BarItem> hbars;
    for (const std::string& value : def->values) {
        const double f = hist.count(value) ? hist.at(value) : 0.0;
        hcsv << value << ',' << format_double(f) << '\n';
        hbars.push_back(BarItem{value, f, f, f});
    }
    write_bar_chart_svg((out / ("top5_" + choice + ".svg")).string(), "top 5% distribution of " + choice, hbars,
                        false);

    const QuantileTable qt = quantile_table(records);
    std::ofstream qcsv(out / "quantiles.csv");
    qcsv << "quantile,score\n90th," << format_double(qt.q90) << "\n95th," << format_double(qt.q95) << "\n99th,"
         << format_double(qt.q99) << "\nmax," << format_double(qt.max) << '\n';

    const ChoiceConfig base = config_path.empty() ? ChoiceConfig{} : load_config_file(config_path);
    const double baseline = compute_random_baseline(base);
    const double best = qt.max;
    if (best > baseline) {
        const auto curve = ecdf_rescaled(records, baseline, best);
        write_ecdf_svg((out / "ecdf.svg").string(), "rescaled score ECDF", curve);
    } else {
        std::cerr << "warning: best score does not exceed the random baseline; skipping ECDF\n";
    }
    std::cout << "analysis written to " << out.string() << "\n";
    return 0;
}

int cmd_plot(const std::string& records_path, const std::string& config_path, const std::string& out_dir) {
    const std::vector<StudyRecord> records = load_records(records_path);
    if (records.empty()) throw std::runtime_error("no usable records in " + records_path);
    const fs::path out = resolve_output(out_dir);
    fs::create_directories(out);
    const QuantileTable qt = quantile_table(records);
    const ChoiceConfig base = config_path.empty() ? ChoiceConfig{} : load_config_file(config_path);
    const double baseline = compute_random_baseline(base);
    if (!(qt.max > baseline)) throw std::runtime_error("best score does not exceed the random baseline");
    write_ecdf_svg((out / "ecdf.svg").string(), "rescaled score ECDF", ecdf_rescaled(records, baseline, qt.max));
    std::cout << "plot written to " << (out / "ecdf.svg").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"On-policy RL choice-study lab"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", records_path, preset, space_path, choice;
    std::vector<std::string> overrides;
    uint64_t seed = 0, study_seed = 0;
    int n_configs = 24, seeds = 3, workers = 1;

    CLI::App* train = app.add_subcommand("train", "run one training run");
    train->add_option("--config", config_path, "config file (key = value lines)");
    train->add_option("--set", overrides, "override a config key, key=value")->take_all();
    train->add_option("--seed", seed, "run seed");
    train->add_option("--out", out_dir, "output directory");

    CLI::App* study = app.add_subcommand("study", "run a random-search study");
    study->add_option("--preset", preset, "built-in design name");
    study->add_option("--space", space_path, "choice-space JSON file");
    study->add_option("--config", config_path, "base config file");
    study->add_option("--set", overrides, "override a base-config key, key=value")->take_all();
    study->add_option("--n-configs", n_configs, "sampled configurations");
    study->add_option("--seeds", seeds, "seeds per configuration");
    study->add_option("--workers", workers, "parallel workers");
    study->add_option("--study-seed", study_seed, "study seed");
    study->add_option("--out", out_dir, "output directory");

    CLI::App* analyze = app.add_subcommand("analyze", "per-choice study analysis");
    analyze->add_option("--records", records_path, "records.jsonl path")->required();
    analyze->add_option("--preset", preset, "built-in design name");
    analyze->add_option("--space", space_path, "choice-space JSON file");
    analyze->add_option("--config", config_path, "base config for the random baseline");
    analyze->add_option("--choice", choice, "choice name to condition on")->required();
    analyze->add_option("--out", out_dir, "output directory");

    CLI::App* plot = app.add_subcommand("plot", "study-level ECDF plot");
    plot->add_option("--records", records_path, "records.jsonl path")->required();
    plot->add_option("--config", config_path, "base config for the random baseline");
    plot->add_option("--out", out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 1;
    }

    try {
        if (train->parsed()) return cmd_train(config_path, overrides, seed, out_dir);
        if (study->parsed())
            return cmd_study(preset, space_path, config_path, overrides, n_configs, seeds, workers, study_seed,
                             out_dir);
        if (analyze->parsed()) return cmd_analyze(records_path, preset, space_path, config_path, choice, out_dir);
        if (plot->parsed()) return cmd_plot(records_path, config_path, out_dir);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
