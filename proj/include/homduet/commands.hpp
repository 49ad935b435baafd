#pragma once

#include "homduet/analysis.hpp"
#include "homduet/config.hpp"
#include "homduet/trial_sim.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace homduet::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kConfig = 2, kRuntime = 3, kInsufficient = 4 };

struct SimulateOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<double> duration_s;
    std::optional<std::string> mode;
    // Heralded-trial engine: this many consecutive trials without the schedule.
    std::optional<std::uint64_t> trials;
    std::optional<std::string> out_dir;
};

struct AnalyzeOptions {
    std::optional<std::string> config_path;
    std::vector<std::string> positional;
    std::optional<std::string> dist;
    std::optional<std::string> indist;
    std::optional<std::string> auto1;
    std::optional<std::string> auto2;
    std::string window = "800";  // a length, a comma list, or "sweep"
    std::string report = "json";
    bool force = false;
    std::optional<double> g2n1;
    std::optional<double> g2n2;
    std::optional<std::string> out_dir;
};

struct SweepOptions {
    std::string config_path;
    std::string axis;
    std::vector<double> points;
    int jobs = 1;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> trials;
    std::optional<std::string> out_dir;
};

int cmd_simulate(const SimulateOptions& opt);
int cmd_analyze(const AnalyzeOptions& opt);
int cmd_sweep(const SweepOptions& opt);

/// Parses argv, dispatches, and maps exceptions to exit codes.
int run(int argc, char** argv);

/// Seed precedence: config, then HOMDUET_SEED, then the command line.
std::uint64_t resolve_seed(std::uint64_t config_seed, std::optional<std::uint64_t> flag);

struct PairRun {
    analysis::CorrelationAccumulator indist;
    analysis::CorrelationAccumulator dist;
};

/// Distinguishable and indistinguishable heralded-trial runs of one model,
/// accumulated in memory.
PairRun simulate_pair(const TrialModel& model, const photonics::PhotonStateMixture& node1,
                      const photonics::PhotonStateMixture& node2, std::uint64_t trials, std::uint64_t seed,
                      const analysis::AccumulatorConfig& acc);

}  // namespace homduet::cli
