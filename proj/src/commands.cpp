#include "homduet/commands.hpp"

#include "homduet/error.hpp"
#include "homduet/fit.hpp"
#include "homduet/sequencer.hpp"
#include "homduet/svg.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#ifndef HOMDUET_VERSION
#define HOMDUET_VERSION "unknown"
#endif

namespace homduet::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

// Malformed invocation caught after argument parsing; maps to kUsage.
class UsageError : public Error {
public:
    using Error::Error;
};

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

json estimate_json(const Estimate& e) { return json{{"value", e.value}, {"error", e.error}}; }

json optional_json(const std::optional<Estimate>& e) { return e ? estimate_json(*e) : json(nullptr); }

fs::path prepare_out(const std::optional<std::string>& flag, const std::string& fallback)
{
    fs::path dir = flag ? *flag : fallback;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
    }
    return dir;
}

// manifest.json accumulates one entry per produced file.
void update_manifest(const fs::path& dir, const std::string& key, const json& entry)
{
    const fs::path path = dir / "manifest.json";
    json doc = json::object();
    if (fs::exists(path)) {
        std::ifstream in(path);
        try {
            doc = json::parse(in);
        } catch (const json::exception&) {
            doc = json::object();
        }
    }
    doc["schema_version"] = kSchemaVersion;
    doc["tool"] = "homduet";
    doc["tool_version"] = HOMDUET_VERSION;
    doc["runs"][key] = entry;
    write_text_file(path.string(), doc.dump(2) + "\n");
}

std::vector<double> parse_list(const std::string& text)
{
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (item.find_first_not_of(" \t", used) != std::string::npos) {
                throw std::invalid_argument(item);
            }
        } catch (const std::exception&) {
            throw ConfigError("--window: cannot parse '" + item + "'");
        }
    }
    return out;
}

analysis::AccumulatorConfig accumulator_for(const AnalysisConfig& ac, std::vector<double> lengths)
{
    if (std::find(lengths.begin(), lengths.end(), ac.reference_window_ns) == lengths.end()) {
        lengths.push_back(ac.reference_window_ns);
    }
    return ac.accumulator(lengths);
}

json curve_json(const analysis::G2Curve& c)
{
    return json{{"delays", c.delays},
                {"values", c.values},
                {"errors", c.errors},
                {"g2_zero", estimate_json(c.g2_zero)},
                {"zero_lag_counts", c.zero_lag_counts},
                {"mean_side_counts", c.mean_side_counts}};
}

std::string histogram_csv(const analysis::DeltaHistogram& h)
{
    std::string out = "# schema_version=1\ndelta_ns,counts\n";
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
        out += num(h.center_ns(i)) + "," + std::to_string(h.counts[i]) + "\n";
    }
    return out;
}

json report_json(const analysis::HomReport& r)
{
    return json{{"window", {{"offset_ns", r.window.offset_ns}, {"length_ns", r.window.length_ns}}},
                {"g2_d", estimate_json(r.g2_d)},
                {"g2_i", estimate_json(r.g2_i)},
                {"visibility", estimate_json(r.visibility)},
                {"eta", optional_json(r.eta)},
                {"share", estimate_json(r.share)},
                {"x", estimate_json(r.x)},
                {"g2n1", optional_json(r.g2n1)},
                {"g2n2", optional_json(r.g2n2)},
                {"coincidences_d", r.coincidences_d},
                {"coincidences_i", r.coincidences_i}};
}

std::string opt_cell(const std::optional<Estimate>& e, bool error)
{
    return e ? num(error ? e->error : e->value) : "";
}

std::string sweep_csv(const std::vector<analysis::SweepRow>& rows)
{
    std::string out = "# schema_version=1\nt_w_ns,share,share_err,V,V_err,eta,eta_err,flagged,note\n";
    for (const auto& r : rows) {
        out += num(r.window.length_ns) + "," + num(r.share.value) + "," + num(r.share.error) + "," +
               opt_cell(r.visibility, false) + "," + opt_cell(r.visibility, true) + "," + opt_cell(r.eta, false) + "," +
               opt_cell(r.eta, true) + "," + (r.flagged ? "1" : "0") + "," + r.note + "\n";
    }
    return out;
}

Plot sweep_plot(const std::vector<analysis::SweepRow>& rows)
{
    Plot p{"Window sweep", "window length t_w (ns)", "value", {}};
    Series share{"share of counts", {}, false, "#2ca02c"};
    Series vis{"V", {}, false, "#1f77b4"};
    Series eta{"eta", {}, false, "#d62728"};
    for (const auto& r : rows) {
        if (r.flagged) {
            continue;
        }
        share.points.push_back({r.window.length_ns, r.share.value, r.share.error});
        if (r.visibility) {
            vis.points.push_back({r.window.length_ns, r.visibility->value, r.visibility->error});
        }
        if (r.eta) {
            eta.points.push_back({r.window.length_ns, r.eta->value, r.eta->error});
        }
    }
    p.series = {share, vis, eta};
    return p;
}

}  // namespace

std::uint64_t resolve_seed(std::uint64_t config_seed, std::optional<std::uint64_t> flag)
{
    if (flag) {
        return *flag;
    }
    if (const char* env = std::getenv("HOMDUET_SEED"); env != nullptr && *env != '\0') {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(env, &used);
            if (env[used] != '\0') {
                throw std::invalid_argument(env);
            }
            return v;
        } catch (const std::exception&) {
            throw ConfigError(std::string("HOMDUET_SEED: not an unsigned integer: '") + env + "'");
        }
    }
    return config_seed;
}

PairRun simulate_pair(const TrialModel& model, const photonics::PhotonStateMixture& node1,
                      const photonics::PhotonStateMixture& node2, std::uint64_t trials, std::uint64_t seed,
                      const analysis::AccumulatorConfig& acc)
{
    std::uint64_t mix = seed;
    const std::uint64_t seed_d = splitmix64(mix);
    const std::uint64_t seed_i = splitmix64(mix);
    PairRun out{analysis::CorrelationAccumulator(acc), analysis::CorrelationAccumulator(acc)};
    TrialModel m = model;
    m.mode = RunMode::distinguishable;
    simulate_trials(TrialSimulator(m, node1, node2), seed_d, 0, trials, out.dist);
    m.mode = RunMode::indistinguishable;
    simulate_trials(TrialSimulator(m, node1, node2), seed_i, 0, trials, out.indist);
    out.dist.finish();
    out.indist.finish();
    return out;
}

int cmd_simulate(const SimulateOptions& opt)
{
    const auto wall_start = std::chrono::steady_clock::now();
    ExperimentConfig cfg = load_config(opt.config_path);
    const auto hash = cfg.hash;
    if (opt.mode) {
        cfg.sequence.mode = parse_run_mode(*opt.mode);
    }
    if (opt.duration_s) {
        cfg.duration_s = *opt.duration_s;
    }
    cfg.seed = resolve_seed(cfg.seed, opt.seed);
    cfg.validate();

    const fs::path dir = prepare_out(opt.out_dir, cfg.output_dir);
    const std::string name = std::string(run_mode_name(cfg.sequence.mode)) + ".homd";
    const fs::path file = dir / name;

    const auto setup = cfg.setup();
    analysis::TimestampWriter writer(file, hash);
    json entry;
    if (opt.trials) {
        TrialModel model;
        model.mode = cfg.sequence.mode;
        model.node1 = sources::dlcz_number_stats(cfg.dlcz);
        model.node2 = sources::rydberg_number_stats(cfg.rydberg);
        model.detector = cfg.detector;
        model.memory_delay_ns = cfg.dlcz.memory_delay_ns;
        model.distinguishable_offset_ns = cfg.sequence.distinguishable_offset_ns;
        model.trial_span_ns = cfg.sequence.trial_span_ns;
        simulate_trials(TrialSimulator(model, setup.node1_state, setup.node2_state), cfg.seed, 0, *opt.trials, writer);
        entry["engine"] = "heralded-trials";
        entry["heralded_trials"] = *opt.trials;
    } else {
        const auto summary = sequencer::run_experiment(setup, cfg.seed, cfg.duration_s, writer);
        entry["engine"] = "sequencer";
        entry["duration_s"] = summary.duration_s;
        entry["heralded_trials"] = summary.heralded_trials;
        entry["write_attempts"] = summary.write_attempts;
        entry["triple_coincidences"] = summary.triple_coincidences;
        entry["duty_cycle"] = summary.duty_cycle();
        entry["data_time_s"] = summary.data_time_s;
        json cals = json::array();
        for (const auto& c : summary.calibrations) {
            cals.push_back({{"start_s", c.start_s},
                            {"end_s", c.end_s},
                            {"trial_index", c.trial_index},
                            {"ok", c.ok},
                            {"detuning_before_mhz", c.detuning_before_mhz},
                            {"correction_mhz", c.correction_mhz},
                            {"diagnostic", c.diagnostic}});
        }
        entry["calibrations"] = cals;
        json cps = json::array();
        for (const auto& c : summary.checkpoints) {
            cps.push_back({c.time_s, c.first_trial, c.detuning_mhz});
        }
        entry["checkpoints"] = {{"columns", {"time_s", "first_trial", "detuning_mhz"}}, {"rows", cps}};
    }
    writer.close();

    entry["file"] = name;
    entry["records"] = writer.count();
    entry["mode"] = run_mode_name(cfg.sequence.mode);
    entry["seed"] = cfg.seed;
    entry["config_hash"] = hex(hash);
    entry["config"] = canonical_text(cfg);
    entry["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    update_manifest(dir, name, entry);
    std::cout << file.string() << ": " << writer.count() << " records\n";
    return kOk;
}

int cmd_analyze(const AnalyzeOptions& opt)
{
    AnalysisConfig ac;
    if (opt.config_path) {
        ac = load_config(*opt.config_path).analysis;
    }
    auto dist = opt.dist;
    auto indist = opt.indist;
    std::optional<std::string> single;
    if (opt.positional.size() == 1 && !dist && !indist) {
        single = opt.positional[0];
    } else if (opt.positional.size() == 2 && !dist && !indist) {
        dist = opt.positional[0];
        indist = opt.positional[1];
    } else if (!opt.positional.empty()) {
        throw UsageError("analyze: give one file, a (dist, indist) pair, or use --dist/--indist");
    }
    if (!single && !(dist && indist)) {
        if (dist || indist) {
            single = dist ? *dist : *indist;
            dist.reset();
            indist.reset();
        } else {
            throw UsageError("analyze: no input files");
        }
    }

    std::vector<std::string> files;
    for (const auto& f : {single, dist, indist, opt.auto1, opt.auto2}) {
        if (f) {
            files.push_back(*f);
        }
    }
    std::optional<analysis::ConfigHash> first_hash;
    for (const auto& f : files) {
        analysis::TimestampReader reader(f);
        if (!first_hash) {
            first_hash = reader.header().config_hash;
        } else if (reader.header().config_hash != *first_hash && !opt.force) {
            throw ConfigError("analyze: config hash of " + f + " differs from " + files.front() +
                              " (use --force to analyze anyway)");
        }
    }

    const bool sweep = opt.window == "sweep";
    const std::vector<double> lengths = sweep ? ac.sweep_windows_ns : parse_list(opt.window);
    const auto acc_cfg = accumulator_for(ac, lengths);
    const std::size_t n_req = lengths.size();

    const fs::path dir = prepare_out(opt.out_dir, "analysis");
    json doc{{"schema_version", kSchemaVersion}, {"tool_version", HOMDUET_VERSION}};
    if (first_hash) {
        doc["config_hash"] = hex(*first_hash);
    }

    if (single) {
        const auto acc = analysis::accumulate_file(*single, acc_cfg);
        json rows = json::array();
        std::string csv = "# schema_version=1\nt_w_ns,share,g2_0,g2_0_err,zero_lag_counts\n";
        for (std::size_t w = 0; w < n_req; ++w) {
            const auto share = analysis::count_share(acc, w);
            analysis::G2Curve curve;
            try {
                curve = analysis::trial_g2(acc, w);
            } catch (const InsufficientStatistics& e) {
                if (!sweep) {
                    throw;
                }
                rows.push_back({{"window_ns", lengths[w]}, {"share", estimate_json(share)}, {"flagged", e.what()}});
                continue;
            }
            rows.push_back({{"window_ns", lengths[w]}, {"share", estimate_json(share)}, {"g2", curve_json(curve)}});
            csv += num(lengths[w]) + "," + num(share.value) + "," + num(curve.g2_zero.value) + "," +
                   num(curve.g2_zero.error) + "," + std::to_string(curve.zero_lag_counts) + "\n";
        }
        doc["file"] = *single;
        doc["trials"] = acc.trials();
        doc["windows"] = rows;
        write_text_file((dir / "delta_t.csv").string(), histogram_csv(acc.histogram()));
        if (sweep) {
            Plot p{"Window sweep", "window length t_w (ns)", "value", {}};
            Series share{"share of counts", {}, false, "#2ca02c"};
            Series g2{"g2(0)", {}, false, "#1f77b4"};
            for (const auto& r : rows) {
                if (r.contains("flagged")) {
                    continue;
                }
                const double t = r["window_ns"];
                share.points.push_back({t, r["share"]["value"], r["share"]["error"]});
                g2.points.push_back({t, r["g2"]["g2_zero"]["value"], r["g2"]["g2_zero"]["error"]});
            }
            p.series = {share, g2};
            write_text_file((dir / "sweep.csv").string(), csv);
            write_text_file((dir / "sweep.svg").string(), render_svg(p));
        }
        if (opt.report == "csv") {
            write_text_file((dir / "report.csv").string(), csv);
            std::cout << csv;
        } else {
            write_text_file((dir / "report.json").string(), doc.dump(2) + "\n");
            std::cout << doc.dump(2) << "\n";
        }
        return kOk;
    }

    const auto acc_d = analysis::accumulate_file(*dist, acc_cfg);
    const auto acc_i = analysis::accumulate_file(*indist, acc_cfg);
    std::optional<analysis::CorrelationAccumulator> acc_a1;
    std::optional<analysis::CorrelationAccumulator> acc_a2;
    if (opt.auto1) {
        acc_a1 = analysis::accumulate_file(*opt.auto1, acc_cfg);
    }
    if (opt.auto2) {
        acc_a2 = analysis::accumulate_file(*opt.auto2, acc_cfg);
    }
    auto inputs_for = [&](std::size_t w) {
        analysis::HomInputs in;
        if (acc_a1) {
            in.g2n1 = analysis::heralded_autocorrelation(*acc_a1, w);
        } else if (opt.g2n1 || ac.g2n1) {
            in.g2n1 = Estimate{opt.g2n1 ? *opt.g2n1 : *ac.g2n1, 0.0};
        }
        if (acc_a2) {
            in.g2n2 = analysis::heralded_autocorrelation(*acc_a2, w);
        } else if (opt.g2n2 || ac.g2n2) {
            in.g2n2 = Estimate{opt.g2n2 ? *opt.g2n2 : *ac.g2n2, 0.0};
        }
        return in;
    };

    doc["dist"] = *dist;
    doc["indist"] = *indist;
    doc["trials_d"] = acc_d.trials();
    doc["trials_i"] = acc_i.trials();
    write_text_file((dir / "delta_t_dist.csv").string(), histogram_csv(acc_d.histogram()));
    write_text_file((dir / "delta_t_indist.csv").string(), histogram_csv(acc_i.histogram()));

    if (sweep) {
        std::vector<analysis::SweepRow> rows;
        for (std::size_t w = 0; w < n_req; ++w) {
            analysis::SweepRow row;
            row.window = acc_cfg.windows[w];
            try {
                row.share = analysis::count_share(acc_i, w);
                const auto rep = analysis::hom_report(acc_i, acc_d, w, inputs_for(w));
                row.visibility = rep.visibility;
                row.eta = rep.eta;
            } catch (const InsufficientStatistics& e) {
                row.flagged = true;
                row.note = e.what();
            }
            rows.push_back(row);
        }
        try {
            rows.push_back(analysis::interpolate_at_share(rows, 0.90));
        } catch (const InsufficientStatistics&) {
            // No bracketing rows; the table simply lacks the interpolated line.
        }
        write_text_file((dir / "sweep.csv").string(), sweep_csv(rows));
        write_text_file((dir / "sweep.svg").string(), render_svg(sweep_plot(rows)));
        json jr = json::array();
        for (const auto& r : rows) {
            jr.push_back({{"t_w_ns", r.window.length_ns},
                          {"share", estimate_json(r.share)},
                          {"visibility", optional_json(r.visibility)},
                          {"eta", optional_json(r.eta)},
                          {"flagged", r.flagged},
                          {"note", r.note}});
        }
        doc["sweep"] = jr;
    } else {
        json reports = json::array();
        std::string csv = "# schema_version=1\nt_w_ns,share,g2_d,g2_d_err,g2_i,g2_i_err,V,V_err,eta,eta_err,x,x_err\n";
        for (std::size_t w = 0; w < n_req; ++w) {
            const auto rep = analysis::hom_report(acc_i, acc_d, w, inputs_for(w));
            reports.push_back(report_json(rep));
            csv += num(lengths[w]) + "," + num(rep.share.value) + "," + num(rep.g2_d.value) + "," +
                   num(rep.g2_d.error) + "," + num(rep.g2_i.value) + "," + num(rep.g2_i.error) + "," +
                   num(rep.visibility.value) + "," + num(rep.visibility.error) + "," + opt_cell(rep.eta, false) + "," +
                   opt_cell(rep.eta, true) + "," + num(rep.x.value) + "," + num(rep.x.error) + "\n";
        }
        doc["reports"] = reports;
        doc["g2_curve_dist"] = curve_json(analysis::trial_g2(acc_d, 0));
        doc["g2_curve_indist"] = curve_json(analysis::trial_g2(acc_i, 0));
        if (opt.report == "csv") {
            write_text_file((dir / "report.csv").string(), csv);
            std::cout << csv;
            return kOk;
        }
    }
    write_text_file((dir / "report.json").string(), doc.dump(2) + "\n");
    std::cout << doc.dump(2) << "\n";
    return kOk;
}

namespace {

struct SweepPoint {
    double value = 0.0;
    bool flagged = false;
    std::string note;
    std::optional<Estimate> y;  // plotted quantity
    std::optional<Estimate> visibility;
    std::optional<Estimate> eta;
    std::optional<Estimate> share;
    double model = std::numeric_limits<double>::quiet_NaN();
};

}  // namespace

int cmd_sweep(const SweepOptions& opt)
{
    ExperimentConfig cfg = load_config(opt.config_path);
    cfg.seed = resolve_seed(cfg.seed, opt.seed);
    const std::uint64_t trials = opt.trials ? *opt.trials : cfg.sweep.trials;
    if (opt.points.empty()) {
        throw ConfigError("--points: need at least one value");
    }
    if (opt.axis != "g2n1" && opt.axis != "detuning" && opt.axis != "window" && opt.axis != "mu") {
        throw ConfigError("--axis: expected g2n1, detuning, window or mu");
    }
    if (opt.jobs < 1) {
        throw ConfigError("--jobs: must be at least 1");
    }
    const fs::path dir = prepare_out(opt.out_dir, cfg.output_dir);

    TrialModel base_model;
    base_model.detector = cfg.detector;
    base_model.memory_delay_ns = cfg.dlcz.memory_delay_ns;
    base_model.distinguishable_offset_ns = cfg.sequence.distinguishable_offset_ns;
    base_model.trial_span_ns = cfg.sequence.trial_span_ns;
    const auto base_mode = photonics::make_waveform(cfg.waveform.rise_ns, cfg.waveform.decay_ns, cfg.waveform.grid);
    const auto node1_state = sources::dlcz_state(cfg.dlcz, cfg.waveform.rise_ns, cfg.waveform.decay_ns, cfg.waveform.grid);

    std::vector<SweepPoint> results(opt.points.size());
    std::vector<analysis::SweepRow> window_rows;

    auto run_point = [&](std::size_t i) {
        SweepPoint& sp = results[i];
        sp.value = opt.points[i];
        try {
            auto dlcz = cfg.dlcz;
            auto ryd = cfg.rydberg;
            double mu = ryd.mu;
            if (opt.axis == "g2n1") {
                dlcz.excitation_p = sources::dlcz_excitation_for_g2(sp.value);
            } else if (opt.axis == "detuning") {
                ryd.detuning_mhz = cfg.rydberg.detuning_mhz + sp.value;
            } else if (opt.axis == "mu") {
                mu = sp.value;
            }
            TrialModel model = base_model;
            model.node1 = sources::dlcz_number_stats(dlcz);
            model.node2 = sources::rydberg_number_stats(ryd, mu);
            const auto node2_state = sources::rydberg_state(ryd, base_mode, mu);
            const double g2n1 = sources::dlcz_heralded_g2(dlcz.excitation_p);
            const double g2n2 = sources::rydberg_models(ryd, mu).g2;
            std::uint64_t mix = cfg.seed + 0x9E3779B97F4A7C15ULL * (i + 1);
            const auto pair = simulate_pair(model, node1_state, node2_state, trials, splitmix64(mix),
                                            accumulator_for(cfg.analysis, {cfg.analysis.window_ns}));
            analysis::HomInputs in;
            in.g2n1 = Estimate{g2n1, 0.0};
            in.g2n2 = Estimate{g2n2, 0.0};
            const auto rep = analysis::hom_report(pair.indist, pair.dist, 0, in);
            sp.visibility = rep.visibility;
            sp.eta = rep.eta;
            sp.share = rep.share;
            const double eta_model = photonics::state_overlap(node1_state, node2_state);
            const double x_model = model.node1.p1 / model.node2.p1;
            if (opt.axis == "detuning") {
                // Normalized coincidences g2_i / g2_d = 1 - V.
                sp.y = Estimate{1.0 - rep.visibility.value, rep.visibility.error};
                sp.model = 1.0 - 2.0 * eta_model / (g2n1 * x_model + g2n2 / x_model + 2.0);
            } else if (opt.axis == "mu") {
                sp.y = rep.eta;
                sp.model = eta_model;
            } else {
                sp.y = rep.visibility;
                sp.model = 2.0 * eta_model / (g2n1 * x_model + g2n2 / x_model + 2.0);
            }
        } catch (const Error& e) {
            sp.flagged = true;
            sp.note = e.what();
        }
    };

    if (opt.axis == "window") {
        // One pair of runs analyzed at every requested window length.
        TrialModel model = base_model;
        model.node1 = sources::dlcz_number_stats(cfg.dlcz);
        model.node2 = sources::rydberg_number_stats(cfg.rydberg);
        const auto node2_state = sources::rydberg_state(cfg.rydberg, base_mode);
        const auto acc = accumulator_for(cfg.analysis, opt.points);
        const auto pair = simulate_pair(model, node1_state, node2_state, trials, cfg.seed, acc);
        analysis::HomInputs in;
        in.g2n1 = Estimate{sources::dlcz_heralded_g2(cfg.dlcz.excitation_p), 0.0};
        in.g2n2 = Estimate{sources::rydberg_models(cfg.rydberg).g2, 0.0};
        window_rows = analysis::window_sweep(pair.indist, pair.dist, in);
        window_rows.resize(opt.points.size());
        for (std::size_t i = 0; i < opt.points.size(); ++i) {
            auto& sp = results[i];
            sp.value = opt.points[i];
            sp.flagged = window_rows[i].flagged;
            sp.note = window_rows[i].note;
            sp.visibility = window_rows[i].visibility;
            sp.eta = window_rows[i].eta;
            sp.share = window_rows[i].share;
            sp.y = window_rows[i].eta;
        }
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t i = next++; i < opt.points.size(); i = next++) {
                run_point(i);
            }
        };
        std::vector<std::thread> pool;
        const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(opt.jobs), opt.points.size());
        for (std::size_t t = 1; t < n_threads; ++t) {
            pool.emplace_back(worker);
        }
        worker();
        for (auto& th : pool) {
            th.join();
        }
    }

    json doc{{"schema_version", kSchemaVersion},
             {"tool_version", HOMDUET_VERSION},
             {"axis", opt.axis},
             {"config_hash", hex(cfg.hash)},
             {"seed", cfg.seed},
             {"trials_per_run", trials}};
    std::string csv = "# schema_version=1\n" + opt.axis + ",share,V,V_err,eta,eta_err,y,y_err,model,flagged,note\n";
    json rows = json::array();
    Series data{"simulated", {}, false, "#1f77b4"};
    Series model_line{"model", {}, true, "#d62728"};
    std::vector<analysis::FitPoint> fit_points;
    for (const auto& sp : results) {
        csv += num(sp.value) + "," + (sp.share ? num(sp.share->value) : "") + "," + opt_cell(sp.visibility, false) +
               "," + opt_cell(sp.visibility, true) + "," + opt_cell(sp.eta, false) + "," + opt_cell(sp.eta, true) +
               "," + opt_cell(sp.y, false) + "," + opt_cell(sp.y, true) + "," +
               (std::isfinite(sp.model) ? num(sp.model) : "") + "," + (sp.flagged ? "1" : "0") + "," + sp.note + "\n";
        rows.push_back({{"point", sp.value},
                        {"share", optional_json(sp.share)},
                        {"visibility", optional_json(sp.visibility)},
                        {"eta", optional_json(sp.eta)},
                        {"model", std::isfinite(sp.model) ? json(sp.model) : json(nullptr)},
                        {"flagged", sp.flagged},
                        {"note", sp.note}});
        if (sp.y && !sp.flagged) {
            data.points.push_back({sp.value, sp.y->value, sp.y->error});
            fit_points.push_back({sp.value, sp.y->value, std::max(sp.y->error, 1e-6)});
        }
        if (std::isfinite(sp.model)) {
            model_line.points.push_back({sp.value, sp.model, 0.0});
        }
    }
    doc["rows"] = rows;

    Plot plot;
    plot.x_label = opt.axis;
    if (opt.axis == "detuning") {
        plot.title = "HOM dip versus relative detuning";
        plot.y_label = "g2_i / g2_d";
        model_line.label = "overlap model";
        try {
            const auto fit = analysis::lorentzian_fit(fit_points);
            doc["lorentzian"] = {{"center_mhz", estimate_json(fit.center_est)},
                                 {"fwhm_mhz", estimate_json(fit.width_est)},
                                 {"amplitude", estimate_json(fit.amplitude_est)},
                                 {"offset", estimate_json(fit.offset_est)},
                                 {"chi2", fit.chi2},
                                 {"dof", fit.dof}};
            Series fit_line{"Lorentzian fit", {}, true, "#2ca02c"};
            const double lo = opt.points.front();
            const double hi = opt.points.back();
            for (int k = 0; k <= 200; ++k) {
                const double x = lo + (hi - lo) * k / 200.0;
                fit_line.points.push_back({x, analysis::lorentzian(x, fit.center, fit.width, fit.amplitude, fit.offset), 0});
            }
            plot.series.push_back(fit_line);
        } catch (const FitError& e) {
            doc["lorentzian"] = {{"error", e.what()}};
        }
    } else if (opt.axis == "g2n1") {
        plot.title = "Visibility versus node 1 autocorrelation";
        plot.y_label = "V";
        model_line.label = "V = 2 eta / (g2n1 x + g2n2 / x + 2)";
    } else if (opt.axis == "mu") {
        plot.title = "Indistinguishability versus input mean photon number";
        plot.y_label = "eta";
        model_line.label = "state overlap model";
    } else {
        plot.title = "Indistinguishability versus window length";
        plot.y_label = "eta";
    }
    if (!model_line.points.empty()) {
        plot.series.insert(plot.series.begin(), model_line);
    }
    plot.series.push_back(data);

    const std::string stem = "sweep_" + opt.axis;
    write_text_file((dir / (stem + ".csv")).string(), csv);
    write_text_file((dir / (stem + ".json")).string(), doc.dump(2) + "\n");
    write_text_file((dir / (stem + ".svg")).string(), render_svg(plot));
    update_manifest(dir, stem, {{"axis", opt.axis}, {"config_hash", hex(cfg.hash)}, {"seed", cfg.seed},
                                {"points", opt.points}, {"trials_per_run", trials}});
    std::cout << csv;
    return kOk;
}

int run(int argc, char** argv)
{
    CLI::App app{"Two-node HOM interference simulator and timestamp analyzer"};
    app.set_version_flag("--version", std::string(HOMDUET_VERSION));
    app.require_subcommand(1);

    SimulateOptions sim;
    std::string sim_seed;
    auto* s = app.add_subcommand("simulate", "Simulate a run and write a timestamp file plus manifest");
    s->add_option("config", sim.config_path, "Experiment configuration file")->required();
    s->add_option("--seed", sim.seed, "RNG seed (overrides HOMDUET_SEED and the config)");
    s->add_option("--duration", sim.duration_s, "Simulated wall time in seconds");
    s->add_option("--mode", sim.mode, "dist | indist | autocorr-n1 | autocorr-n2")
        ->check(CLI::IsMember({"dist", "indist", "autocorr-n1", "autocorr-n2"}));
    s->add_option("--trials", sim.trials, "Simulate this many heralded trials directly, without the schedule");
    s->add_option("--out", sim.out_dir, "Output directory (default: config output_dir)");

    AnalyzeOptions an;
    auto* a = app.add_subcommand("analyze", "Correlation analysis of timestamp files");
    a->add_option("files", an.positional, "One file, or a (dist, indist) pair");
    a->add_option("--config", an.config_path, "Configuration supplying analysis settings");
    a->add_option("--dist", an.dist, "Distinguishable-mode file");
    a->add_option("--indist", an.indist, "Indistinguishable-mode file");
    a->add_option("--auto1", an.auto1, "Node 1 autocorrelation file");
    a->add_option("--auto2", an.auto2, "Node 2 autocorrelation file");
    a->add_option("--window", an.window, "Window length in ns, a comma list, or 'sweep'");
    a->add_option("--report", an.report, "json | csv")->check(CLI::IsMember({"json", "csv"}));
    a->add_flag("--force", an.force, "Analyze files with differing config hashes");
    a->add_option("--g2n1", an.g2n1, "Node 1 autocorrelation when no --auto1 file is given");
    a->add_option("--g2n2", an.g2n2, "Node 2 autocorrelation when no --auto2 file is given");
    a->add_option("--out", an.out_dir, "Output directory (default: ./analysis)");

    SweepOptions sw;
    std::string points;
    auto* w = app.add_subcommand("sweep", "Simulate and analyze one run pair per sweep point");
    w->add_option("config", sw.config_path, "Experiment configuration file")->required();
    w->add_option("--axis", sw.axis, "g2n1 | detuning | window | mu")
        ->required()
        ->check(CLI::IsMember({"g2n1", "detuning", "window", "mu"}));
    w->add_option("--points", points, "Comma-separated sweep values")->required();
    w->add_option("--jobs", sw.jobs, "Parallel sweep points");
    w->add_option("--seed", sw.seed, "RNG seed");
    w->add_option("--trials", sw.trials, "Heralded trials per run");
    w->add_option("--out", sw.out_dir, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*s) {
            return cmd_simulate(sim);
        }
        if (*a) {
            return cmd_analyze(an);
        }
        sw.points = parse_list(points);
        return cmd_sweep(sw);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const InsufficientStatistics& e) {
        std::cerr << e.what() << "\n";
        return kInsufficient;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    }
}

}  // namespace homduet::cli
