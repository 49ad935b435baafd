#pragma once

#include "homduet/analysis.hpp"
#include "homduet/detection.hpp"
#include "homduet/photonics.hpp"
#include "homduet/sequencer.hpp"
#include "homduet/sources.hpp"
#include "homduet/timestamp.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace homduet::cli {

/// Scalar or numeric-array value from the key tree.
using Value = std::variant<bool, std::int64_t, double, std::string, std::vector<double>>;

/// Subset of TOML: [dotted.sections], `key = value` with strings, booleans,
/// integers, floats and single-line numeric arrays, `#` comments. Keys are
/// stored flattened as "section.key".
std::map<std::string, Value> parse_key_tree(const std::string& text, const std::string& source = "<config>");

struct WaveformConfig {
    double rise_ns = 60.0;
    double decay_ns = 180.0;
    photonics::TimeGrid grid = photonics::default_grid();
};

struct AnalysisConfig {
    double window_ns = 800.0;
    double window_offset_ns = 0.0;
    double reference_window_ns = 800.0;
    int max_lag = 10;
    double histogram_bin_ns = 20.0;
    std::vector<double> sweep_windows_ns{100, 150, 200, 250, 300, 350, 400, 450, 500, 600, 700, 800};
    // Source autocorrelations used for eta when no autocorrelation runs are given.
    std::optional<double> g2n1;
    std::optional<double> g2n2;

    analysis::AccumulatorConfig accumulator(const std::vector<double>& lengths) const;
    analysis::AccumulatorConfig accumulator() const { return accumulator({window_ns}); }
};

struct SweepSettings {
    std::uint64_t trials = 2'000'000;
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    double duration_s = 600.0;
    std::string output_dir = "out";
    WaveformConfig waveform;
    sources::DlczConfig dlcz;
    sources::RydbergConfig rydberg;
    detection::DetectorConfig detector;
    sequencer::SequenceConfig sequence;
    sequencer::DriftModel drift;
    sequencer::ScanConfig calibration;
    AnalysisConfig analysis;
    SweepSettings sweep;

    // SHA-256 of the canonical text of the resolved configuration.
    analysis::ConfigHash hash{};

    /// Validates every sub-config; errors carry the field path.
    void validate() const;

    sequencer::ExperimentSetup setup() const;
};

/// Resolves a key tree over the defaults. Unknown keys and type mismatches
/// raise ConfigError naming the key.
ExperimentConfig config_from_tree(const std::map<std::string, Value>& tree);
ExperimentConfig config_from_text(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every field, one `section.key = value` line each, sorted. Equal configs
/// give identical text regardless of how the source file was written.
std::string canonical_text(const ExperimentConfig& cfg);

analysis::ConfigHash sha256(const std::string& text);
std::string hex(const analysis::ConfigHash& hash);

}  // namespace homduet::cli
