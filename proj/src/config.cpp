#include "homduet/config.hpp"

#include "homduet/error.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace homduet::cli {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return "";
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool valid_key(const std::string& k)
{
    if (k.empty() || k.front() == '.' || k.back() == '.' || k.find("..") != std::string::npos) {
        return false;
    }
    return std::all_of(k.begin(), k.end(),
                       [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'; });
}

// Removes a trailing comment that is not inside a string.
std::string strip_comment(const std::string& line)
{
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (c == '"' && (i == 0 || line[i - 1] != '\\')) {
            in_string = !in_string;
        } else if (c == '#' && !in_string) {
            return line.substr(0, i);
        }
    }
    return line;
}

std::optional<double> parse_number(const std::string& raw, bool& is_integer)
{
    std::string s;
    for (char c : raw) {
        if (c != '_') {
            s.push_back(c);
        }
    }
    if (s.empty()) {
        return std::nullopt;
    }
    if (s == "inf" || s == "+inf" || s == "-inf" || s == "nan") {
        return std::nullopt;  // non-finite values are never valid here
    }
    is_integer = s.find_first_of(".eE") == std::string::npos;
    const char* first = s.data();
    if (*first == '+') {
        ++first;
    }
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        return std::nullopt;
    }
    return v;
}

Value parse_value(const std::string& raw, const std::string& where)
{
    if (raw.empty()) {
        throw ConfigError(where + ": missing value");
    }
    if (raw.front() == '"') {
        if (raw.size() < 2 || raw.back() != '"') {
            throw ConfigError(where + ": unterminated string");
        }
        std::string out;
        for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
            if (raw[i] == '\\' && i + 2 < raw.size()) {
                const char n = raw[++i];
                out.push_back(n == 'n' ? '\n' : n == 't' ? '\t' : n);
            } else {
                out.push_back(raw[i]);
            }
        }
        return out;
    }
    if (raw == "true" || raw == "false") {
        return raw == "true";
    }
    if (raw.front() == '[') {
        if (raw.back() != ']') {
            throw ConfigError(where + ": unterminated array (arrays must fit on one line)");
        }
        std::vector<double> out;
        std::stringstream body(raw.substr(1, raw.size() - 2));
        std::string item;
        while (std::getline(body, item, ',')) {
            item = trim(item);
            if (item.empty()) {
                continue;  // trailing comma
            }
            bool is_int = false;
            const auto v = parse_number(item, is_int);
            if (!v) {
                throw ConfigError(where + ": array items must be numbers, got '" + item + "'");
            }
            out.push_back(*v);
        }
        return out;
    }
    bool is_int = false;
    const auto v = parse_number(raw, is_int);
    if (!v) {
        throw ConfigError(where + ": cannot parse value '" + raw + "'");
    }
    if (is_int && std::abs(*v) < 9.0e15) {
        return static_cast<std::int64_t>(*v);
    }
    return *v;
}

std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string format_value(const Value& v)
{
    struct Visitor {
        std::string operator()(bool b) const { return b ? "true" : "false"; }
        std::string operator()(std::int64_t i) const { return std::to_string(i); }
        std::string operator()(double d) const { return format_double(d); }
        std::string operator()(const std::string& s) const
        {
            std::string out = "\"";
            for (char c : s) {
                if (c == '"' || c == '\\') {
                    out.push_back('\\');
                }
                out.push_back(c);
            }
            return out + "\"";
        }
        std::string operator()(const std::vector<double>& a) const
        {
            std::string out = "[";
            for (std::size_t i = 0; i < a.size(); ++i) {
                out += (i ? ", " : "") + format_double(a[i]);
            }
            return out + "]";
        }
    };
    return std::visit(Visitor{}, v);
}

double as_real(const Value& v, const std::string& key)
{
    if (const auto* d = std::get_if<double>(&v)) {
        return *d;
    }
    if (const auto* i = std::get_if<std::int64_t>(&v)) {
        return static_cast<double>(*i);
    }
    throw ConfigError(key + ": expected a number");
}

std::int64_t as_int(const Value& v, const std::string& key)
{
    if (const auto* i = std::get_if<std::int64_t>(&v)) {
        return *i;
    }
    if (const auto* d = std::get_if<double>(&v); d != nullptr && std::floor(*d) == *d && std::abs(*d) < 9.0e15) {
        return static_cast<std::int64_t>(*d);
    }
    throw ConfigError(key + ": expected an integer");
}

bool as_bool(const Value& v, const std::string& key)
{
    if (const auto* b = std::get_if<bool>(&v)) {
        return *b;
    }
    throw ConfigError(key + ": expected true or false");
}

std::string as_string(const Value& v, const std::string& key)
{
    if (const auto* s = std::get_if<std::string>(&v)) {
        return *s;
    }
    throw ConfigError(key + ": expected a quoted string");
}

std::vector<double> as_array(const Value& v, const std::string& key)
{
    if (const auto* a = std::get_if<std::vector<double>>(&v)) {
        return *a;
    }
    throw ConfigError(key + ": expected an array of numbers");
}

struct Field {
    std::string key;
    std::function<std::optional<Value>(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const Value&)> set;
};

Field real(std::string key, double ExperimentConfig::*outer)
{
    return {key, [outer](const ExperimentConfig& c) -> std::optional<Value> { return c.*outer; },
            [outer, key](ExperimentConfig& c, const Value& v) { c.*outer = as_real(v, key); }};
}

template <typename Section, typename T>
Field member(std::string key, Section ExperimentConfig::*section, T Section::*field)
{
    Field f;
    f.key = key;
    f.get = [section, field](const ExperimentConfig& c) -> std::optional<Value> {
        const T& v = c.*section.*field;
        if constexpr (std::is_same_v<T, bool>) {
            return Value{v};
        } else if constexpr (std::is_same_v<T, int>) {
            return Value{static_cast<std::int64_t>(v)};
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            return Value{static_cast<std::int64_t>(v)};
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
            return Value{v};
        } else if constexpr (std::is_same_v<T, std::optional<double>>) {
            return v ? std::optional<Value>(Value{*v}) : std::nullopt;
        } else {
            return Value{static_cast<double>(v)};
        }
    };
    f.set = [section, field, key](ExperimentConfig& c, const Value& v) {
        T& dst = c.*section.*field;
        if constexpr (std::is_same_v<T, bool>) {
            dst = as_bool(v, key);
        } else if constexpr (std::is_same_v<T, int>) {
            const auto i = as_int(v, key);
            if (i < -2147483647 || i > 2147483647) {
                throw ConfigError(key + ": out of range");
            }
            dst = static_cast<int>(i);
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            const auto i = as_int(v, key);
            if (i < 0) {
                throw ConfigError(key + ": must be non-negative");
            }
            dst = static_cast<std::uint64_t>(i);
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
            dst = as_array(v, key);
        } else if constexpr (std::is_same_v<T, std::optional<double>>) {
            dst = as_real(v, key);
        } else {
            dst = as_real(v, key);
        }
    };
    return f;
}

const std::vector<Field>& fields()
{
    using EC = ExperimentConfig;
    using sources::DlczConfig;
    using sources::RydbergConfig;
    static const std::vector<Field> table = [] {
        std::vector<Field> t;
        t.push_back({"seed", [](const EC& c) -> std::optional<Value> { return Value{static_cast<std::int64_t>(c.seed)}; },
                     [](EC& c, const Value& v) {
                         const auto i = as_int(v, "seed");
                         if (i < 0) {
                             throw ConfigError("seed: must be non-negative");
                         }
                         c.seed = static_cast<std::uint64_t>(i);
                     }});
        t.push_back(real("duration_s", &EC::duration_s));
        t.push_back({"output_dir", [](const EC& c) -> std::optional<Value> { return Value{c.output_dir}; },
                     [](EC& c, const Value& v) { c.output_dir = as_string(v, "output_dir"); }});

        t.push_back(member("waveform.rise_ns", &EC::waveform, &WaveformConfig::rise_ns));
        t.push_back(member("waveform.decay_ns", &EC::waveform, &WaveformConfig::decay_ns));
        t.push_back({"waveform.t_start_ns", [](const EC& c) -> std::optional<Value> { return Value{c.waveform.grid.t_start}; },
                     [](EC& c, const Value& v) { c.waveform.grid.t_start = as_real(v, "waveform.t_start_ns"); }});
        t.push_back({"waveform.dt_ns", [](const EC& c) -> std::optional<Value> { return Value{c.waveform.grid.dt}; },
                     [](EC& c, const Value& v) { c.waveform.grid.dt = as_real(v, "waveform.dt_ns"); }});
        t.push_back({"waveform.n_bins",
                     [](const EC& c) -> std::optional<Value> { return Value{static_cast<std::int64_t>(c.waveform.grid.n_bins)}; },
                     [](EC& c, const Value& v) {
                         const auto n = as_int(v, "waveform.n_bins");
                         if (n < 2) {
                             throw ConfigError("waveform.n_bins: must be at least 2");
                         }
                         c.waveform.grid.n_bins = static_cast<std::size_t>(n);
                     }});

        t.push_back(member("dlcz.herald_prob", &EC::dlcz, &DlczConfig::herald_prob));
        t.push_back(member("dlcz.retrieval_prob", &EC::dlcz, &DlczConfig::retrieval_prob));
        t.push_back(member("dlcz.memory_delay_ns", &EC::dlcz, &DlczConfig::memory_delay_ns));
        t.push_back(member("dlcz.excitation_p", &EC::dlcz, &DlczConfig::excitation_p));
        t.push_back(member("dlcz.bs_arrival_prob", &EC::dlcz, &DlczConfig::bs_arrival_prob));
        t.push_back(member("dlcz.waveform_mismatch", &EC::dlcz, &DlczConfig::waveform_mismatch));
        t.push_back(member("dlcz.detuning_mhz", &EC::dlcz, &DlczConfig::detuning_mhz));
        t.push_back(member("dlcz.spectral_jitter_mhz", &EC::dlcz, &DlczConfig::spectral_jitter_mhz));

        t.push_back(member("rydberg.generation_prob", &EC::rydberg, &RydbergConfig::generation_prob));
        t.push_back(member("rydberg.mu", &EC::rydberg, &RydbergConfig::mu));
        t.push_back(member("rydberg.c6_mhz_um6", &EC::rydberg, &RydbergConfig::c6_mhz_um6));
        t.push_back(member("rydberg.gamma_mhz", &EC::rydberg, &RydbergConfig::gamma_mhz));
        t.push_back(member("rydberg.omega_c_mhz", &EC::rydberg, &RydbergConfig::omega_c_mhz));
        t.push_back(member("rydberg.n_level", &EC::rydberg, &RydbergConfig::n_level));
        t.push_back(member("rydberg.cloud_size_um", &EC::rydberg, &RydbergConfig::cloud_size_um));
        t.push_back(member("rydberg.purity_weight", &EC::rydberg, &RydbergConfig::purity_weight));
        t.push_back({"rydberg.purity_law",
                     [](const EC& c) -> std::optional<Value> {
                         return Value{std::string(c.rydberg.purity_law == sources::PurityLaw::rational ? "rational"
                                                                                                       : "exponential")};
                     },
                     [](EC& c, const Value& v) {
                         const auto s = as_string(v, "rydberg.purity_law");
                         if (s == "rational") {
                             c.rydberg.purity_law = sources::PurityLaw::rational;
                         } else if (s == "exponential") {
                             c.rydberg.purity_law = sources::PurityLaw::exponential;
                         } else {
                             throw ConfigError("rydberg.purity_law: expected \"rational\" or \"exponential\"");
                         }
                     }});
        t.push_back(member("rydberg.g2_baseline", &EC::rydberg, &RydbergConfig::g2_baseline));
        t.push_back(member("rydberg.g2_slope", &EC::rydberg, &RydbergConfig::g2_slope));
        t.push_back(member("rydberg.gen_saturation_mu", &EC::rydberg, &RydbergConfig::gen_saturation_mu));
        t.push_back(member("rydberg.gen_knee_mu", &EC::rydberg, &RydbergConfig::gen_knee_mu));
        t.push_back(member("rydberg.gen_decay_mu", &EC::rydberg, &RydbergConfig::gen_decay_mu));
        t.push_back(member("rydberg.bs_arrival_prob", &EC::rydberg, &RydbergConfig::bs_arrival_prob));
        t.push_back(member("rydberg.detuning_mhz", &EC::rydberg, &RydbergConfig::detuning_mhz));
        t.push_back(member("rydberg.spectral_jitter_mhz", &EC::rydberg, &RydbergConfig::spectral_jitter_mhz));

        using detection::DetectorConfig;
        t.push_back(member("detector.efficiency_a", &EC::detector, &DetectorConfig::efficiency_a));
        t.push_back(member("detector.efficiency_b", &EC::detector, &DetectorConfig::efficiency_b));
        t.push_back(member("detector.dark_rate_hz", &EC::detector, &DetectorConfig::dark_rate_hz));
        t.push_back(member("detector.dead_time_ns", &EC::detector, &DetectorConfig::dead_time_ns));

        using sequencer::SequenceConfig;
        t.push_back(member("sequence.node1_cycle_ms", &EC::sequence, &SequenceConfig::node1_cycle_ms));
        t.push_back(member("sequence.node1_interrogation_ms", &EC::sequence, &SequenceConfig::node1_interrogation_ms));
        t.push_back(member("sequence.write_trial_period_ns", &EC::sequence, &SequenceConfig::write_trial_period_ns));
        t.push_back(member("sequence.node2_cycle_ms", &EC::sequence, &SequenceConfig::node2_cycle_ms));
        t.push_back(member("sequence.node2_interrogation_ms", &EC::sequence, &SequenceConfig::node2_interrogation_ms));
        t.push_back(member("sequence.cycles_per_interrogation", &EC::sequence, &SequenceConfig::cycles_per_interrogation));
        t.push_back(member("sequence.trial_span_ns", &EC::sequence, &SequenceConfig::trial_span_ns));
        t.push_back(member("sequence.trigger_latency_ns", &EC::sequence, &SequenceConfig::trigger_latency_ns));
        t.push_back(member("sequence.calibration_period_s", &EC::sequence, &SequenceConfig::calibration_period_s));
        t.push_back(member("sequence.calibration_duration_s", &EC::sequence, &SequenceConfig::calibration_duration_s));
        t.push_back(member("sequence.calibration_enabled", &EC::sequence, &SequenceConfig::calibration_enabled));
        t.push_back(member("sequence.distinguishable_offset_ns", &EC::sequence, &SequenceConfig::distinguishable_offset_ns));
        t.push_back({"sequence.mode",
                     [](const EC& c) -> std::optional<Value> { return Value{std::string(run_mode_name(c.sequence.mode))}; },
                     [](EC& c, const Value& v) {
                         try {
                             c.sequence.mode = parse_run_mode(as_string(v, "sequence.mode"));
                         } catch (const ConfigError& e) {
                             throw ConfigError(std::string("sequence.") + e.what());
                         }
                     }});

        using sequencer::DriftModel;
        t.push_back(member("drift.coupling_drift_rate_mhz_per_h", &EC::drift, &DriftModel::coupling_drift_rate_mhz_per_h));
        t.push_back(member("drift.resonance_walk_sigma_mhz_per_sqrt_h", &EC::drift,
                           &DriftModel::resonance_walk_sigma_mhz_per_sqrt_h));
        t.push_back(member("drift.trigger_rate_shift_mhz", &EC::drift, &DriftModel::trigger_rate_shift_mhz));
        t.push_back(member("drift.herald_rate_threshold_hz", &EC::drift, &DriftModel::herald_rate_threshold_hz));
        t.push_back(member("drift.prewarm", &EC::drift, &DriftModel::prewarm));

        using sequencer::ScanConfig;
        t.push_back(member("calibration.scan_range_mhz", &EC::calibration, &ScanConfig::scan_range_mhz));
        t.push_back(member("calibration.n_points", &EC::calibration, &ScanConfig::n_points));
        t.push_back(member("calibration.resonance_width_mhz", &EC::calibration, &ScanConfig::resonance_width_mhz));
        t.push_back(member("calibration.counts_per_point", &EC::calibration, &ScanConfig::counts_per_point));

        t.push_back(member("analysis.window_ns", &EC::analysis, &AnalysisConfig::window_ns));
        t.push_back(member("analysis.window_offset_ns", &EC::analysis, &AnalysisConfig::window_offset_ns));
        t.push_back(member("analysis.reference_window_ns", &EC::analysis, &AnalysisConfig::reference_window_ns));
        t.push_back(member("analysis.max_lag", &EC::analysis, &AnalysisConfig::max_lag));
        t.push_back(member("analysis.histogram_bin_ns", &EC::analysis, &AnalysisConfig::histogram_bin_ns));
        t.push_back(member("analysis.sweep_windows_ns", &EC::analysis, &AnalysisConfig::sweep_windows_ns));
        t.push_back(member("analysis.g2n1", &EC::analysis, &AnalysisConfig::g2n1));
        t.push_back(member("analysis.g2n2", &EC::analysis, &AnalysisConfig::g2n2));

        t.push_back(member("sweep.trials", &EC::sweep, &SweepSettings::trials));
        return t;
    }();
    return table;
}

}  // namespace

std::map<std::string, Value> parse_key_tree(const std::string& text, const std::string& source)
{
    std::map<std::string, Value> out;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = source + ":" + std::to_string(lineno);
        line = trim(strip_comment(line));
        if (line.empty()) {
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) {
                throw ConfigError(where + ": malformed section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            if (!valid_key(section)) {
                throw ConfigError(where + ": invalid section name '" + section + "'");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(where + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        if (!valid_key(key)) {
            throw ConfigError(where + ": invalid key '" + key + "'");
        }
        const std::string full = section.empty() ? key : section + "." + key;
        if (out.count(full) != 0) {
            throw ConfigError(where + ": duplicate key '" + full + "'");
        }
        out.emplace(full, parse_value(trim(line.substr(eq + 1)), where + ": " + full));
    }
    return out;
}

analysis::AccumulatorConfig AnalysisConfig::accumulator(const std::vector<double>& lengths) const
{
    analysis::AccumulatorConfig acc;
    acc.windows.clear();
    for (double len : lengths) {
        acc.windows.push_back({window_offset_ns, len});
    }
    acc.reference = {window_offset_ns, reference_window_ns};
    acc.max_lag = max_lag;
    acc.histogram_bin_ns = histogram_bin_ns;
    return acc;
}

void ExperimentConfig::validate() const
{
    if (!(duration_s >= 0.0) || !std::isfinite(duration_s)) {
        throw ConfigError("duration_s: must be non-negative");
    }
    if (!(waveform.rise_ns >= 0.0)) {
        throw ConfigError("waveform.rise_ns: must be non-negative");
    }
    if (!(waveform.decay_ns > 0.0)) {
        throw ConfigError("waveform.decay_ns: must be positive");
    }
    try {
        photonics::TimeGrid check_grid(waveform.grid.t_start, waveform.grid.dt, waveform.grid.n_bins);
        (void)check_grid;
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("waveform: ") + e.what());
    }
    dlcz.validate();
    rydberg.validate();
    detector.validate();
    sequence.validate();
    drift.validate();
    if (sequence.calibration_enabled) {
        calibration.validate();
    }
    analysis.accumulator(analysis.sweep_windows_ns).validate();
    analysis.accumulator().validate();
    for (const auto& g : {analysis.g2n1, analysis.g2n2}) {
        if (g && !(*g >= 0.0)) {
            throw ConfigError("analysis.g2n1 / g2n2: must be non-negative");
        }
    }
    if (sweep.trials == 0) {
        throw ConfigError("sweep.trials: must be positive");
    }
    // Builds the photon states and the run schedule, which checks the
    // remaining cross-field constraints.
    const auto s = setup();
    TrialModel model;
    model.mode = sequence.mode;
    model.memory_delay_ns = dlcz.memory_delay_ns;
    model.distinguishable_offset_ns = sequence.distinguishable_offset_ns;
    model.trial_span_ns = sequence.trial_span_ns;
    model.detector = detector;
    TrialSimulator probe(model, s.node1_state, s.node2_state);
    (void)probe;
}

sequencer::ExperimentSetup ExperimentConfig::setup() const
{
    return sequencer::make_setup(sequence, dlcz, rydberg, detector, drift, calibration, waveform.rise_ns,
                                 waveform.decay_ns, waveform.grid);
}

ExperimentConfig config_from_tree(const std::map<std::string, Value>& tree)
{
    ExperimentConfig cfg;
    std::map<std::string, const Field*> by_key;
    for (const auto& f : fields()) {
        by_key[f.key] = &f;
    }
    for (const auto& [key, value] : tree) {
        if (key == "dlcz.g2") {
            continue;
        }
        const auto it = by_key.find(key);
        if (it == by_key.end()) {
            throw ConfigError(key + ": unknown configuration key");
        }
        it->second->set(cfg, value);
    }
    if (const auto it = tree.find("dlcz.g2"); it != tree.end()) {
        if (tree.count("dlcz.excitation_p") != 0) {
            throw ConfigError("dlcz.g2: conflicts with dlcz.excitation_p (set one of them)");
        }
        cfg.dlcz.excitation_p = sources::dlcz_excitation_for_g2(as_real(it->second, "dlcz.g2"));
    }
    cfg.validate();
    cfg.hash = sha256(canonical_text(cfg));
    return cfg;
}

ExperimentConfig config_from_text(const std::string& text, const std::string& source)
{
    return config_from_tree(parse_key_tree(text, source));
}

ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError(path.string() + ": cannot read configuration file");
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return config_from_text(buf.str(), path.string());
}

std::string canonical_text(const ExperimentConfig& cfg)
{
    std::vector<std::string> lines;
    for (const auto& f : fields()) {
        if (const auto v = f.get(cfg)) {
            lines.push_back(f.key + " = " + format_value(*v));
        }
    }
    std::sort(lines.begin(), lines.end());
    std::string out;
    for (const auto& l : lines) {
        out += l + "\n";
    }
    return out;
}

analysis::ConfigHash sha256(const std::string& text)
{
    analysis::ConfigHash out{};
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size()) {
        throw Error("SHA-256 computation failed");
    }
    return out;
}

std::string hex(const analysis::ConfigHash& hash)
{
    static const char* digits = "0123456789abcdef";
    std::string s;
    for (auto b : hash) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 15]);
    }
    return s;
}

}  // namespace homduet::cli
