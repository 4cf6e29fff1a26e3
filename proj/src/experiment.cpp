#include "pdesrc/experiment.hpp"
#include "pdesrc/error.hpp"

#include <toml.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace pdesrc {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void config_fail(const std::string& key, const std::string& msg) {
    fail(ErrorKind::ConfigError, key + ": " + msg);
}

// Typed access to a TOML table with key names carried into error messages.
class Reader {
public:
    Reader(const toml::table& t, std::string prefix) : tbl_(t), prefix_(std::move(prefix)) {}

    std::string key(const std::string& k) const { return prefix_.empty() ? k : prefix_ + "." + k; }
    bool has(const std::string& k) const { return tbl_.contains(k); }

    void allow(std::initializer_list<const char*> keys) const {
        std::set<std::string> ok(keys.begin(), keys.end());
        for (const auto& [k, v] : tbl_) {
            (void)v;
            if (!ok.count(std::string(k.str()))) config_fail(key(std::string(k.str())), "unknown key");
        }
    }

    std::string str(const std::string& k, const std::string& def) const {
        if (!has(k)) return def;
        auto v = tbl_[k].value<std::string>();
        if (!v) config_fail(key(k), "expected a string");
        return *v;
    }
    double num(const std::string& k, double def) const {
        if (!has(k)) return def;
        const toml::node* n = tbl_.get(k);
        if (n->is_floating_point()) return n->as_floating_point()->get();
        if (n->is_integer()) return static_cast<double>(n->as_integer()->get());
        config_fail(key(k), "expected a number");
    }
    long long integer(const std::string& k, long long def) const {
        if (!has(k)) return def;
        auto v = tbl_[k].value_exact<int64_t>();
        if (!v) config_fail(key(k), "expected an integer");
        return *v;
    }
    bool boolean(const std::string& k, bool def) const {
        if (!has(k)) return def;
        auto v = tbl_[k].value_exact<bool>();
        if (!v) config_fail(key(k), "expected a boolean");
        return *v;
    }
    Vec nums(const std::string& k) const {
        Vec out;
        if (!has(k)) return out;
        const toml::array* a = tbl_[k].as_array();
        if (!a) config_fail(key(k), "expected an array of numbers");
        for (const auto& e : *a) {
            if (e.is_floating_point()) out.push_back(e.as_floating_point()->get());
            else if (e.is_integer()) out.push_back(static_cast<double>(e.as_integer()->get()));
            else config_fail(key(k), "expected an array of numbers");
        }
        return out;
    }
    std::vector<int> ints(const std::string& k) const {
        std::vector<int> out;
        if (!has(k)) return out;
        const toml::array* a = tbl_[k].as_array();
        if (!a) config_fail(key(k), "expected an array of integers");
        for (const auto& e : *a) {
            if (!e.is_integer()) config_fail(key(k), "expected an array of integers");
            out.push_back(static_cast<int>(e.as_integer()->get()));
        }
        return out;
    }
    std::optional<Reader> sub(const std::string& k) const {
        if (!has(k)) return std::nullopt;
        const toml::table* t = tbl_[k].as_table();
        if (!t) config_fail(key(k), "expected a table");
        return Reader(*t, key(k));
    }

private:
    const toml::table& tbl_;
    std::string prefix_;
};

GridSpec read_grid(const Reader& r) {
    r.allow({"counts", "spacing_m", "origin_m", "epsilon_m"});
    GridSpec g;
    g.counts = r.ints("counts");
    g.spacing = r.nums("spacing_m");
    g.origin = r.nums("origin_m");
    g.epsilon = r.num("epsilon_m", 0.0);
    if (g.counts.empty()) config_fail(r.key("counts"), "required");
    return g;
}

toml::array to_array(const Vec& v) {
    toml::array a;
    for (double x : v) a.push_back(x);
    return a;
}

toml::array to_array(const std::vector<int>& v) {
    toml::array a;
    for (int x : v) a.push_back(static_cast<int64_t>(x));
    return a;
}

toml::table grid_table(const GridSpec& g) {
    toml::table t;
    t.insert("counts", to_array(g.counts));
    if (!g.spacing.empty()) t.insert("spacing_m", to_array(g.spacing));
    if (!g.origin.empty()) t.insert("origin_m", to_array(g.origin));
    if (g.epsilon != 0.0) t.insert("epsilon_m", g.epsilon);
    return t;
}

std::string model_kind_name(FieldKind k) {
    switch (k) {
    case FieldKind::Poisson2D: return "poisson2d";
    case FieldKind::Poisson3D: return "poisson3d";
    case FieldKind::Diffusion: return "diffusion";
    case FieldKind::Wave: return "wave";
    }
    return "unknown";
}

std::string snr_label(const std::optional<double>& snr) {
    if (!snr) return "inf";
    std::ostringstream s;
    s << *snr;
    return s.str();
}

std::string trial_file_name(const Combo& c, int trial, const std::string& prefix, const std::string& ext) {
    std::ostringstream s;
    s << prefix << "_snr" << snr_label(c.snr_db) << "_L" << c.time_samples << "_trial" << std::setw(3)
      << std::setfill('0') << trial << ext;
    return s.str();
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::nan("");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    std::ostringstream s;
    s << std::setprecision(12) << v;
    return s.str();
}

} // namespace

UniformGrid GridSpec::resolve(const Box& region) const {
    const int d = region.dim();
    if (static_cast<int>(counts.size()) != d) config_fail("grid.counts", "length must equal the dimension");
    UniformGrid g;
    g.counts = counts;
    g.spacing = spacing;
    g.origin = origin;
    if (g.spacing.empty()) {
        g.spacing.resize(d);
        for (int i = 0; i < d; ++i) g.spacing[i] = counts[i] > 1 ? region.width(i) / (counts[i] - 1) : region.width(i);
    }
    if (g.origin.empty()) g.origin = region.lo;
    if (static_cast<int>(g.spacing.size()) != d) config_fail("grid.spacing_m", "length must equal the dimension");
    if (static_cast<int>(g.origin.size()) != d) config_fail("grid.origin_m", "length must equal the dimension");
    for (auto& o : g.origin) o += epsilon;
    return g;
}

bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
    auto src_eq = [](const SourceSet& a, const SourceSet& b) {
        if (a.size() != b.size()) return false;
        for (size_t i = 0; i < a.size(); ++i)
            if (a[i].c != b[i].c || a[i].tau != b[i].tau || a[i].xi != b[i].xi) return false;
        return true;
    };
    return name == o.name && mode == o.mode && trials == o.trials && seed == o.seed && output_dir == o.output_dir &&
           write_samples == o.write_samples && model.kind == o.model.kind && model.dim == o.model.dim &&
           model.mu == o.model.mu && model.c == o.model.c && filter.kind == o.filter.kind &&
           filter.order == o.filter.order && region.lo == o.region.lo && region.hi == o.region.hi &&
           src_eq(sources, o.sources) && layout == o.layout && grid == o.grid && num_sensors == o.num_sensors &&
           sampling_interval == o.sampling_interval && T == o.T && time_samples == o.time_samples &&
           standoff == o.standoff && r_con == o.r_con && rounds == o.rounds && stride == o.stride &&
           snr_db == o.snr_db && method == o.method && M == o.M && K == o.K && k_offset == o.k_offset && r == o.r &&
           headroom == o.headroom && cadzow == o.cadzow && cadzow_max_iter == o.cadzow_max_iter &&
           prewhiten == o.prewhiten && validity_threshold == o.validity_threshold &&
           resample_grid == o.resample_grid && dense_grid == o.dense_grid;
}

ExperimentConfig parse_config(const std::string& toml_text, const std::string& origin) {
    toml::table root;
    try {
        root = toml::parse(toml_text, origin);
    } catch (const toml::parse_error& e) {
        std::ostringstream s;
        s << origin << ":" << e.source().begin.line << ": " << e.description();
        fail(ErrorKind::ConfigError, s.str());
    }
    Reader top(root, "");
    top.allow({"experiment", "model", "filter", "domain", "sources", "network", "gossip", "noise", "estimator"});
    ExperimentConfig cfg;

    if (auto ex = top.sub("experiment")) {
        ex->allow({"name", "mode", "trials", "seed", "output_dir", "write_samples"});
        cfg.name = ex->str("name", cfg.name);
        cfg.mode = ex->str("mode", cfg.mode);
        cfg.trials = static_cast<int>(ex->integer("trials", cfg.trials));
        cfg.seed = static_cast<std::uint64_t>(ex->integer("seed", static_cast<long long>(cfg.seed)));
        cfg.output_dir = ex->str("output_dir", cfg.output_dir);
        cfg.write_samples = ex->boolean("write_samples", cfg.write_samples);
    }

    auto model = top.sub("model");
    if (!model) config_fail("model", "section is required");
    model->allow({"kind", "dimension", "diffusivity_m2_per_s", "wave_speed_m_per_s"});
    std::string kind = model->str("kind", "");
    if (kind == "poisson2d") cfg.model = FieldModel::poisson2d();
    else if (kind == "poisson3d") cfg.model = FieldModel::poisson3d();
    else if (kind == "diffusion")
        cfg.model = FieldModel::diffusion(static_cast<int>(model->integer("dimension", 2)),
                                          model->num("diffusivity_m2_per_s", 1.0));
    else if (kind == "wave")
        cfg.model = FieldModel::wave(static_cast<int>(model->integer("dimension", 3)), model->num("wave_speed_m_per_s", 1.0));
    else config_fail("model.kind", "expected poisson2d, poisson3d, diffusion or wave");

    if (auto f = top.sub("filter")) {
        f->allow({"kind", "order"});
        std::string fk = f->str("kind", "none");
        if (fk == "none") cfg.filter = TemporalFilter::none();
        else if (fk == "bspline") cfg.filter = TemporalFilter::bspline(static_cast<int>(f->integer("order", 3)));
        else config_fail("filter.kind", "expected none or bspline");
    } else {
        cfg.filter = TemporalFilter::none();
    }

    auto dom = top.sub("domain");
    if (!dom) config_fail("domain", "section is required");
    dom->allow({"lo_m", "hi_m"});
    cfg.region.lo = dom->nums("lo_m");
    cfg.region.hi = dom->nums("hi_m");

    if (top.has("sources")) {
        const toml::array* arr = root["sources"].as_array();
        if (!arr) config_fail("sources", "expected an array of tables");
        int idx = 0;
        for (const auto& node : *arr) {
            const toml::table* t = node.as_table();
            std::string key = "sources[" + std::to_string(idx++) + "]";
            if (!t) config_fail(key, "expected a table");
            Reader sr(*t, key);
            sr.allow({"intensity", "tau_seconds", "xi_m"});
            Source s;
            s.c = sr.num("intensity", 1.0);
            s.tau = sr.num("tau_seconds", 0.0);
            s.xi = sr.nums("xi_m");
            cfg.sources.push_back(std::move(s));
        }
    }

    auto net = top.sub("network");
    if (!net) config_fail("network", "section is required");
    net->allow({"layout", "grid", "sensors", "sampling_interval_seconds", "T_seconds", "time_samples", "standoff_m"});
    cfg.layout = net->str("layout", cfg.layout);
    if (auto g = net->sub("grid")) cfg.grid = read_grid(*g);
    cfg.num_sensors = static_cast<int>(net->integer("sensors", 0));
    cfg.sampling_interval = net->num("sampling_interval_seconds", cfg.sampling_interval);
    cfg.T = net->num("T_seconds", cfg.T);
    cfg.time_samples = net->ints("time_samples");
    cfg.standoff = net->num("standoff_m", 0.0);

    if (auto g = top.sub("gossip")) {
        g->allow({"r_con_m", "rounds", "stride"});
        cfg.r_con = g->num("r_con_m", cfg.r_con);
        cfg.rounds = static_cast<long>(g->integer("rounds", cfg.rounds));
        cfg.stride = static_cast<long>(g->integer("stride", cfg.stride));
    }

    if (auto n = top.sub("noise")) {
        n->allow({"snr_db"});
        cfg.snr_db = n->nums("snr_db");
    }

    auto est = top.sub("estimator");
    if (!est) config_fail("estimator", "section is required");
    est->allow({"method", "M", "K", "k_offset", "r", "headroom", "cadzow", "cadzow_max_iter", "prewhiten",
                "validity_threshold", "resample_grid", "dense_grid"});
    cfg.method = est->str("method", cfg.method);
    cfg.M = static_cast<int>(est->integer("M", cfg.M));
    cfg.K = est->ints("K");
    cfg.k_offset = est->ints("k_offset");
    // the diffusion transform diverges at zero spatial frequency, so k starts at 1 unless told otherwise
    if (!est->has("k_offset") && cfg.model.kind == FieldKind::Diffusion) cfg.k_offset.assign(cfg.K.size(), 1);
    cfg.r = static_cast<int>(est->integer("r", cfg.model.is_static() ? 0 : 1));
    cfg.headroom = est->num("headroom", cfg.headroom);
    cfg.cadzow = est->boolean("cadzow", cfg.cadzow);
    cfg.cadzow_max_iter = static_cast<int>(est->integer("cadzow_max_iter", cfg.cadzow_max_iter));
    cfg.prewhiten = est->boolean("prewhiten", cfg.prewhiten);
    cfg.validity_threshold = est->num("validity_threshold", cfg.validity_threshold);
    if (auto g = est->sub("resample_grid")) cfg.resample_grid = read_grid(*g);
    if (auto g = est->sub("dense_grid")) cfg.dense_grid = read_grid(*g);

    validate_config(cfg);
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::IoError, "cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

void validate_config(const ExperimentConfig& cfg) {
    try {
        cfg.model.validate();
    } catch (const Error& e) {
        config_fail("model", e.what());
    }
    try {
        cfg.filter.validate();
    } catch (const Error& e) {
        config_fail("filter.order", e.what());
    }
    const int d = cfg.model.dim;
    if (cfg.mode != "centralized" && cfg.mode != "distributed" && cfg.mode != "unknown_count")
        config_fail("experiment.mode", "expected centralized, distributed or unknown_count");
    if (cfg.trials < 1) config_fail("experiment.trials", "must be at least 1");
    if (cfg.region.dim() != d || static_cast<int>(cfg.region.hi.size()) != d)
        config_fail("domain", "lo_m and hi_m must have " + std::to_string(d) + " entries");
    for (int i = 0; i < d; ++i)
        if (!(cfg.region.hi[i] > cfg.region.lo[i])) config_fail("domain.hi_m", "must exceed lo_m");
    if (cfg.sources.empty()) config_fail("sources", "at least one source is required");
    for (size_t m = 0; m < cfg.sources.size(); ++m) {
        std::string key = "sources[" + std::to_string(m) + "]";
        if (static_cast<int>(cfg.sources[m].xi.size()) != d) config_fail(key + ".xi_m", "wrong dimension");
        if (!cfg.region.contains(cfg.sources[m].xi)) config_fail(key + ".xi_m", "outside the domain");
        if (!cfg.model.is_static() && !(cfg.sources[m].tau >= 0.0 && cfg.sources[m].tau < cfg.T))
            config_fail(key + ".tau_seconds", "must lie in [0, T)");
    }
    if (cfg.layout == "uniform") {
        if (static_cast<int>(cfg.grid.counts.size()) != d) config_fail("network.grid.counts", "wrong dimension");
        for (int c : cfg.grid.counts)
            if (c < 1) config_fail("network.grid.counts", "entries must be positive");
    } else if (cfg.layout == "random") {
        if (cfg.num_sensors < 1) config_fail("network.sensors", "must be positive for random layouts");
    } else {
        config_fail("network.layout", "expected uniform or random");
    }
    if (!(cfg.sampling_interval > 0.0)) config_fail("network.sampling_interval_seconds", "must be positive");
    if (!(cfg.T >= 0.0)) config_fail("network.T_seconds", "must be non-negative");
    if (!cfg.model.is_static() && !(cfg.T > 0.0)) config_fail("network.T_seconds", "must be positive for dynamic fields");
    for (int ts : cfg.time_samples)
        if (ts < 1 || (!cfg.model.is_static() && ts < 2)) config_fail("network.time_samples", "entries too small");
    if (cfg.mode == "distributed") {
        if (!(cfg.r_con > 0.0)) config_fail("gossip.r_con_m", "must be positive");
        if (cfg.rounds < 0) config_fail("gossip.rounds", "must be non-negative");
    }
    try {
        (void)weight_method_from_string(cfg.method);
    } catch (const Error&) {
        config_fail("estimator.method", "expected closed_form, least_squares or interpolate_resample");
    }
    if (cfg.M < 1) config_fail("estimator.M", "must be at least 1");
    if (static_cast<int>(cfg.K.size()) != d) config_fail("estimator.K", "must have " + std::to_string(d) + " entries");
    for (int k : cfg.K)
        if (k < 2 * cfg.M - 1) config_fail("estimator.K", "entries must be at least 2M - 1");
    if (!cfg.k_offset.empty() && static_cast<int>(cfg.k_offset.size()) != d)
        config_fail("estimator.k_offset", "must have " + std::to_string(d) + " entries");
    if (cfg.model.is_static() && cfg.r != 0) config_fail("estimator.r", "static fields use r = 0");
    if (!(cfg.headroom > 0.0 && cfg.headroom <= 1.0)) config_fail("estimator.headroom", "must lie in (0, 1]");
    if (cfg.method == "interpolate_resample" && !cfg.resample_grid)
        config_fail("estimator.resample_grid", "required for interpolate_resample");
    if (cfg.method == "closed_form" && cfg.layout != "uniform")
        config_fail("estimator.method", "closed_form needs a uniform layout");
    if (cfg.method == "closed_form" && cfg.model.is_static())
        config_fail("estimator.method", "closed_form is not available for Poisson fields");
    if (cfg.model.kind == FieldKind::Wave && d == 3 && !cfg.filter.active())
        config_fail("filter.kind", "3-D wave fields need a bspline filter");
}

std::string config_to_toml(const ExperimentConfig& cfg) {
    toml::table root;
    root.insert("experiment", toml::table{{"name", cfg.name},
                                          {"mode", cfg.mode},
                                          {"trials", static_cast<int64_t>(cfg.trials)},
                                          {"seed", static_cast<int64_t>(cfg.seed)},
                                          {"output_dir", cfg.output_dir},
                                          {"write_samples", cfg.write_samples}});
    toml::table model{{"kind", model_kind_name(cfg.model.kind)}, {"dimension", static_cast<int64_t>(cfg.model.dim)}};
    if (cfg.model.kind == FieldKind::Diffusion) model.insert("diffusivity_m2_per_s", cfg.model.mu);
    if (cfg.model.kind == FieldKind::Wave) model.insert("wave_speed_m_per_s", cfg.model.c);
    root.insert("model", model);
    toml::table filter{{"kind", cfg.filter.active() ? "bspline" : "none"}};
    if (cfg.filter.active()) filter.insert("order", static_cast<int64_t>(cfg.filter.order));
    root.insert("filter", filter);
    root.insert("domain", toml::table{{"lo_m", to_array(cfg.region.lo)}, {"hi_m", to_array(cfg.region.hi)}});
    toml::array sources;
    for (const auto& s : cfg.sources)
        sources.push_back(toml::table{{"intensity", s.c}, {"tau_seconds", s.tau}, {"xi_m", to_array(s.xi)}});
    root.insert("sources", sources);
    toml::table net{{"layout", cfg.layout},
                    {"sampling_interval_seconds", cfg.sampling_interval},
                    {"T_seconds", cfg.T},
                    {"standoff_m", cfg.standoff}};
    if (!cfg.grid.counts.empty()) net.insert("grid", grid_table(cfg.grid));
    if (cfg.num_sensors > 0) net.insert("sensors", static_cast<int64_t>(cfg.num_sensors));
    if (!cfg.time_samples.empty()) net.insert("time_samples", to_array(cfg.time_samples));
    root.insert("network", net);
    root.insert("gossip", toml::table{{"r_con_m", cfg.r_con},
                                      {"rounds", static_cast<int64_t>(cfg.rounds)},
                                      {"stride", static_cast<int64_t>(cfg.stride)}});
    if (!cfg.snr_db.empty()) root.insert("noise", toml::table{{"snr_db", to_array(cfg.snr_db)}});
    toml::table est{{"method", cfg.method},
                    {"M", static_cast<int64_t>(cfg.M)},
                    {"K", to_array(cfg.K)},
                    {"r", static_cast<int64_t>(cfg.r)},
                    {"headroom", cfg.headroom},
                    {"cadzow", cfg.cadzow},
                    {"cadzow_max_iter", static_cast<int64_t>(cfg.cadzow_max_iter)},
                    {"prewhiten", cfg.prewhiten},
                    {"validity_threshold", cfg.validity_threshold}};
    if (!cfg.k_offset.empty()) est.insert("k_offset", to_array(cfg.k_offset));
    if (cfg.resample_grid) est.insert("resample_grid", grid_table(*cfg.resample_grid));
    if (cfg.dense_grid) est.insert("dense_grid", grid_table(*cfg.dense_grid));
    root.insert("estimator", est);
    std::ostringstream out;
    out << root << '\n';
    return out.str();
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over the combined words
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::vector<Combo> experiment_combos(const ExperimentConfig& cfg) {
    std::vector<std::optional<double>> snrs;
    if (cfg.snr_db.empty()) snrs.push_back(std::nullopt);
    for (double s : cfg.snr_db) snrs.emplace_back(s);
    std::vector<int> ts = cfg.time_samples;
    if (ts.empty()) {
        if (cfg.model.is_static()) ts.push_back(1);
        else ts.push_back(static_cast<int>(std::lround(cfg.T / cfg.sampling_interval)) + 1);
    }
    std::vector<Combo> out;
    for (const auto& s : snrs)
        for (int t : ts) out.push_back({s, t});
    return out;
}

SensorNetwork build_network(const ExperimentConfig& cfg, const Combo& combo, int trial) {
    const int L = combo.time_samples - 1;
    const double dt = L > 0 ? cfg.T / L : cfg.sampling_interval;
    if (cfg.layout == "uniform") return SensorNetwork::uniform(cfg.grid.resolve(cfg.region), cfg.region, L, dt);
    const double standoff = cfg.standoff > 0.0 ? cfg.standoff : 1e-6 * cfg.region.diameter();
    std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(trial), 1));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<Vec> pos;
    const int d = cfg.model.dim;
    int guard = 0;
    while (static_cast<int>(pos.size()) < cfg.num_sensors) {
        Vec x(d);
        for (int i = 0; i < d; ++i) x[i] = cfg.region.lo[i] + unif(rng) * cfg.region.width(i);
        bool ok = true;
        for (const auto& s : cfg.sources) {
            double r2 = 0.0;
            for (int i = 0; i < d; ++i) r2 += (x[i] - s.xi[i]) * (x[i] - s.xi[i]);
            if (r2 < standoff * standoff) ok = false;
        }
        if (ok) pos.push_back(std::move(x));
        if (++guard > 1000 * cfg.num_sensors) config_fail("network.standoff_m", "cannot place sensors");
    }
    return SensorNetwork::scattered(std::move(pos), cfg.region, L, dt);
}

EstimatorConfig estimator_config(const ExperimentConfig& cfg, const SensorNetwork& net) {
    EstimatorConfig e;
    e.method = weight_method_from_string(cfg.method);
    e.K = cfg.K;
    e.k_offset = cfg.k_offset;
    e.r = cfg.r;
    e.filter = cfg.filter;
    e.headroom = cfg.headroom;
    e.seed = cfg.seed;
    e.cadzow = cfg.cadzow;
    e.cadzow_max_iter = cfg.cadzow_max_iter;
    e.prewhiten = cfg.prewhiten;
    e.validity_threshold = cfg.validity_threshold;
    if (cfg.resample_grid) e.resample_grid = cfg.resample_grid->resolve(cfg.region);
    if (cfg.dense_grid) {
        UniformGrid g = cfg.dense_grid->resolve(cfg.region);
        Vec times;
        if (cfg.model.is_static()) {
            times = {0.0};
        } else {
            size_t J = net.num_times();
            for (size_t j = 1; j <= J; ++j) times.push_back(net.T() * static_cast<double>(j) / static_cast<double>(J));
        }
        e.dense_grid = DenseGrid{g.nodes(), times};
    }
    return e;
}

TrialResult run_trial(const ExperimentConfig& cfg, const Combo& combo, int trial) {
    TrialResult res;
    res.combo = combo;
    res.trial = trial;
    try {
        res.net = build_network(cfg, combo, trial);
        res.samples = synthesize_samples(cfg.model, cfg.sources, res.net, cfg.filter);
        if (combo.snr_db)
            res.samples = add_noise(res.samples, *combo.snr_db,
                                    derive_seed(cfg.seed, static_cast<std::uint64_t>(trial),
                                                2 + static_cast<std::uint64_t>(combo.time_samples) * 1000 +
                                                    static_cast<std::uint64_t>(std::llround(*combo.snr_db * 10.0 + 5000))));
        EstimatorConfig ec = estimator_config(cfg, res.net);
        if (cfg.mode == "centralized") {
            res.report = estimate_centralized(cfg.model, res.net, res.samples, cfg.M, ec);
        } else if (cfg.mode == "unknown_count") {
            res.report = estimate_unknown_count(cfg.model, res.net, res.samples, ec);
        } else {
            CommGraph g = graph_from_positions(res.net.positions, cfg.r_con);
            if (!g.connected()) fail(ErrorKind::ConnectivityFailure, "sensor communication graph is not connected");
            GossipOptions go;
            go.stride = cfg.stride;
            res.distributed = estimate_distributed(cfg.model, g, res.net, res.samples, cfg.M, ec, cfg.rounds,
                                                   derive_seed(cfg.seed, static_cast<std::uint64_t>(trial), 3), go);
            res.report = res.distributed->nodes.front();
        }
        DomainScaling scaling = scaling_for(res.net, cfg.headroom);
        auto match = match_sources(cfg.sources, res.report.sources, scaling);
        for (size_t m = 0; m < cfg.sources.size(); ++m) {
            if (match[m] < 0) continue;
            const Source& t = cfg.sources[m];
            const Source& s = res.report.sources[static_cast<size_t>(match[m])];
            double dist = 0.0;
            for (size_t i = 0; i < t.xi.size(); ++i) dist += (t.xi[i] - s.xi[i]) * (t.xi[i] - s.xi[i]);
            res.location_errors.push_back(std::sqrt(dist));
            res.tau_errors.push_back(cfg.model.is_static() ? 0.0 : std::abs(t.tau - s.tau));
            res.intensity_errors.push_back(std::abs(t.c - s.c));
        }
    } catch (const Error& e) {
        res.error = std::string(to_string(e.kind())) + ": " + e.what();
    }
    return res;
}

nlohmann::json trial_to_json(const ExperimentConfig& cfg, const TrialResult& t) {
    nlohmann::json j;
    j["schema"] = "v1";
    j["experiment"] = cfg.name;
    j["trial"] = t.trial;
    if (t.combo.snr_db) j["snr_db"] = *t.combo.snr_db;
    else j["snr_db"] = nullptr;
    j["time_samples"] = t.combo.time_samples;
    j["truth"] = sources_to_json(cfg.sources);
    if (!t.error.empty()) {
        j["error"] = t.error;
        return j;
    }
    j["report"] = report_to_json(t.report);
    j["num_sensors"] = t.net.num_sensors();
    j["noise_sigma"] = t.samples.noise_sigma;
    j["errors"] = {{"location_m", t.location_errors}, {"tau_seconds", t.tau_errors}, {"intensity", t.intensity_errors}};
    return j;
}

fs::path resolve_output_dir(const ExperimentConfig& cfg) {
    if (const char* env = std::getenv("PDESRC_OUT"); env && *env) return fs::path(env);
    return fs::path(cfg.output_dir);
}

nlohmann::json experiment_plan(const ExperimentConfig& cfg, const fs::path& out_dir) {
    nlohmann::json plan;
    plan["name"] = cfg.name;
    plan["mode"] = cfg.mode;
    plan["model"] = model_kind_name(cfg.model.kind);
    plan["dimension"] = cfg.model.dim;
    plan["method"] = cfg.method;
    plan["trials_per_combo"] = cfg.trials;
    plan["M"] = cfg.M;
    plan["K"] = cfg.K;
    plan["r"] = cfg.r;
    plan["sensors"] = cfg.layout == "uniform" ? static_cast<int>(cfg.grid.resolve(cfg.region).size()) : cfg.num_sensors;
    nlohmann::json combos = nlohmann::json::array();
    for (const auto& c : experiment_combos(cfg)) {
        nlohmann::json cj;
        if (c.snr_db) cj["snr_db"] = *c.snr_db;
        else cj["snr_db"] = nullptr;
        cj["time_samples"] = c.time_samples;
        combos.push_back(cj);
    }
    plan["combos"] = combos;
    plan["total_trials"] = combos.size() * static_cast<size_t>(cfg.trials);
    plan["output_dir"] = out_dir.string();
    return plan;
}

nlohmann::json run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
    fs::path out = resolve_output_dir(cfg);
    nlohmann::json plan = experiment_plan(cfg, out);
    if (opts.dry_run) return plan;

    auto combos = experiment_combos(cfg);
    const size_t total = combos.size() * static_cast<size_t>(cfg.trials);
    std::vector<TrialResult> results(total);
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (size_t i = next++; i < total; i = next++)
            results[i] = run_trial(cfg, combos[i / cfg.trials], static_cast<int>(i % cfg.trials));
    };
    int jobs = std::max(1, opts.jobs);
    std::vector<std::thread> pool;
    for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    fs::create_directories(out / "trials");
    for (const auto& r : results) {
        std::ofstream f(out / "trials" / trial_file_name(r.combo, r.trial, "trial", ".json"));
        f << trial_to_json(cfg, r).dump(2) << '\n';
        if (r.distributed) {
            std::ofstream tr(out / "trials" / trial_file_name(r.combo, r.trial, "trace", ".csv"));
            write_trace_csv(tr, r.distributed->trace);
            std::ofstream tj(out / "trials" / trial_file_name(r.combo, r.trial, "trajectory", ".csv"));
            write_trajectory_csv(tj, r.distributed->trajectories, cfg.model.dim);
        }
        if (cfg.write_samples && r.error.empty()) {
            std::ofstream sf(out / "trials" / trial_file_name(r.combo, r.trial, "samples", ".csv"));
            write_samples_csv(sf, r.net, r.samples);
        }
    }

    std::ofstream agg(out / "aggregate.csv");
    if (!opts.deterministic) {
        auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm{};
        gmtime_r(&now, &tm);
        agg << "# generated " << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << '\n';
    }
    agg << "snr_db,time_samples,trials,failed,mae_location_m,mae_tau_seconds,mae_intensity\n";
    nlohmann::json summary = plan;
    summary["aggregate"] = nlohmann::json::array();
    for (size_t c = 0; c < combos.size(); ++c) {
        std::vector<double> loc, tau, inten;
        int failed = 0;
        for (int t = 0; t < cfg.trials; ++t) {
            const auto& r = results[c * cfg.trials + t];
            if (!r.error.empty()) {
                ++failed;
                continue;
            }
            loc.insert(loc.end(), r.location_errors.begin(), r.location_errors.end());
            tau.insert(tau.end(), r.tau_errors.begin(), r.tau_errors.end());
            inten.insert(inten.end(), r.intensity_errors.begin(), r.intensity_errors.end());
        }
        agg << snr_label(combos[c].snr_db) << ',' << combos[c].time_samples << ',' << cfg.trials << ',' << failed << ','
            << fmt(mean_of(loc)) << ',' << fmt(mean_of(tau)) << ',' << fmt(mean_of(inten)) << '\n';
        summary["aggregate"].push_back({{"snr_db", snr_label(combos[c].snr_db)},
                                        {"time_samples", combos[c].time_samples},
                                        {"failed", failed},
                                        {"mae_location_m", mean_of(loc)},
                                        {"mae_tau_seconds", mean_of(tau)}});
    }
    return summary;
}

nlohmann::json validate_experiment(const ExperimentConfig& cfg) {
    fs::path out = resolve_output_dir(cfg);
    Combo combo = experiment_combos(cfg).front();
    SensorNetwork net = build_network(cfg, combo, 0);
    EstimatorConfig ec = estimator_config(cfg, net);
    DomainScaling scaling = scaling_for(net, cfg.headroom);
    SampleMatrix zero;
    zero.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(net.num_sensors()),
                                        static_cast<Eigen::Index>(net.num_times()));
    PreparedWeights p = prepare_weights(cfg.model, net, zero, ec, scaling);

    const int d = cfg.model.dim;
    auto probe_grid = [&](double frac) {
        int m = d <= 2 ? 6 : 4;
        Vec origin(d), spacing(d);
        for (int i = 0; i < d; ++i) {
            double w = cfg.region.width(i) * frac;
            double lo = cfg.region.lo[i] + 0.5 * (cfg.region.width(i) - w);
            spacing[i] = w / (m - 1);
            origin[i] = lo;
        }
        Vec times;
        if (!cfg.model.is_static())
            for (double f : {0.1, 0.3, 0.5}) times.push_back(f * net.T());
        else times = {0.0};
        double eps = 1e-3 * *std::min_element(spacing.begin(), spacing.end());
        return lattice_grid(origin, std::vector<int>(d, m), spacing, eps, times);
    };
    DenseGrid interior = probe_grid(0.6);
    DenseGrid full = probe_grid(1.0);

    fs::create_directories(out);
    std::ofstream csv(out / "reproduction_error.csv");
    for (int i = 1; i <= d; ++i) csv << "k_" << i << ',';
    csv << "error_interior,error_full\n" << std::setprecision(10);
    double worst_interior = 0.0;
    for (size_t f = 0; f < p.weights.num_k(); ++f) {
        auto k = unflatten(p.weights.shape, f);
        for (int i = 0; i < d; ++i) csv << k[i] + p.weights.k_offset[i] << ',';
        if (p.weights.excluded[f]) {
            csv << "nan,nan\n";
            continue;
        }
        double ei = reproduction_error(p.weights, cfg.model, cfg.filter, p.net, scaling, f, interior);
        double ef = reproduction_error(p.weights, cfg.model, cfg.filter, p.net, scaling, f, full);
        worst_interior = std::max(worst_interior, ei);
        csv << ei << ',' << ef << '\n';
    }
    nlohmann::json j;
    j["name"] = cfg.name;
    j["method"] = cfg.method;
    j["num_sensors"] = p.net.num_sensors();
    if (p.weights.condition_number) j["condition_number"] = *p.weights.condition_number;
    else j["condition_number"] = nullptr;
    j["rank_deficient"] = p.weights.rank_deficient;
    j["max_reproduction_error_interior"] = worst_interior;
    j["output_dir"] = out.string();
    std::ofstream(out / "validate.json") << j.dump(2) << '\n';
    return j;
}

} // namespace pdesrc
