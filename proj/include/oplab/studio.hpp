#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "oplab/config.hpp"
#include "oplab/math.hpp"

namespace oplab {

/// One sampled choice: a unique analysis name, the config key it sets
/// (defaults to the name), and the uniform value list.
struct ChoiceDef {
    std::string name;
    std::string key;
    std::vector<std::string> values;

    const std::string& config_key() const { return key.empty() ? name : key; }
};

/// Sub-choices sampled only when `parent` was assigned `value`.
struct ConditionalBlock {
    std::string parent;
    std::string value;
    std::vector<ChoiceDef> choices;
};

/// A study design: independent top-level choices plus conditional blocks.
/// Blocks may hang off other conditional choices (nested designs); they are
/// evaluated in declaration order.
struct ChoiceSpace {
    std::vector<ChoiceDef> top;
    std::vector<ConditionalBlock> conditional;

    void validate() const;
    const ChoiceDef* find(const std::string& name) const;
    /// The (parent name, parent value) a sub-choice hangs off, if any.
    std::optional<std::pair<std::string, std::string>> parent_of(const std::string& name) const;

    std::string to_json() const;
    static ChoiceSpace from_json(const std::string& text);
    static ChoiceSpace load(const std::string& path);

    /// Built-in designs: losses, arch, norm, advantage, setup, time,
    /// optimizers, regularizers.
    static ChoiceSpace preset(const std::string& name);
    static std::vector<std::string> preset_names();
};

/// Sampled values by choice name; unsampled choices stay at defaults.
using Assignment = std::map<std::string, std::string>;

Assignment sample_config(const ChoiceSpace& space, Rng& rng);
ChoiceConfig apply_assignment(const ChoiceConfig& base, const ChoiceSpace& space, const Assignment& a);

struct StudyRecord {
    int config_index = -1;
    Assignment assignment;
    std::vector<double> scores;  // completed seeds
    double median_score = 0.0;
};

struct StudyOptions {
    int n_configs = 24;
    int seeds = 3;
    int workers = 1;
    uint64_t study_seed = 0;
    ChoiceConfig base;  // environment, budget, and the default choices
};

/// Runs (or resumes) a study, appending one JSON line per finished
/// (config, seed) job; completed pairs found in the records file are not
/// retrained. Returns the grouped records.
std::vector<StudyRecord> run_study(const ChoiceSpace& space, const StudyOptions& opts,
                                   const std::string& records_path);
std::vector<StudyRecord> load_records(const std::string& records_path);

double binomial_cdf(int n, double p, int k);
/// 1-based order-statistic ranks (i_l, i_h) bracketing the p-th percentile
/// of n samples at significance alpha, via the binomial inverse CDF.
std::pair<int, int> binomial_ci_indices(int n, double p = 0.95, double alpha = 0.05);

/// Nearest-rank percentile of the sample (no interpolation).
double nearest_rank_percentile(std::vector<double> xs, double q);

struct CiEstimate {
    double point = 0.0;
    double low = 0.0;
    double high = 0.0;
    int n = 0;
};

std::optional<CiEstimate> conditional_percentile(const std::vector<StudyRecord>& records, const std::string& name,
                                                 const std::string& value, double q = 0.95);
std::map<std::string, double> top_fraction_distribution(const std::vector<StudyRecord>& records,
                                                        const std::string& name, double frac = 0.05);
/// Sorted (rescaled score, cumulative fraction) pairs with scores mapped to
/// (s - random_baseline) / (best_score - random_baseline).
std::vector<std::pair<double, double>> ecdf_rescaled(const std::vector<StudyRecord>& records, double random_baseline,
                                                     double best_score);

struct QuantileTable {
    double q90 = 0.0;
    double q95 = 0.0;
    double q99 = 0.0;
    double max = 0.0;
};
QuantileTable quantile_table(const std::vector<StudyRecord>& records);

struct BarItem {
    std::string label;
    double point = 0.0;
    double low = 0.0;
    double high = 0.0;
};
void write_bar_chart_svg(const std::string& path, const std::string& title, const std::vector<BarItem>& items,
                         bool with_ci);
void write_ecdf_svg(const std::string& path, const std::string& title,
                    const std::vector<std::pair<double, double>>& curve);

}  // namespace oplab
