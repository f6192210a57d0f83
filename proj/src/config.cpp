#include "qflow/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "qflow/chaos.hpp"
#include "qflow/errors.hpp"
#include "qflow/sampler.hpp"

namespace qflow {

namespace {

void only_keys(const Json& j, const std::string& block, std::initializer_list<const char*> keys) {
    require(j.is_object(), "config block '" + block + "' must be an object");
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        require(allowed.count(it.key()) > 0, "unknown key '" + it.key() + "' in config block '" + block + "'");
}

template <class T>
void read(const Json& j, const char* key, T& out, const std::string& block) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("bad value for '" + block + "." + key + "'");
    }
}

FieldSpec read_field(const Json& j, const std::string& where) {
    FieldSpec s;
    if (j.is_number()) {
        s.constant = j.get<double>();
        return s;
    }
    only_keys(j, where, {"constant", "modes"});
    read(j, "constant", s.constant, where);
    if (j.contains("modes")) {
        require(j["modes"].is_array(), "'" + where + ".modes' must be an array");
        for (const auto& m : j["modes"]) {
            only_keys(m, where + ".modes[]", {"k", "sine", "amp"});
            ModeTerm t;
            read(m, "k", t.k, where);
            read(m, "sine", t.sine, where);
            read(m, "amp", t.amp, where);
            require(!t.k.empty(), "mode term needs a frequency vector k");
            s.modes.push_back(std::move(t));
        }
    }
    return s;
}

Json field_json(const FieldSpec& s) {
    Json modes = Json::array();
    for (const auto& t : s.modes) modes.push_back({{"k", t.k}, {"sine", t.sine}, {"amp", t.amp}});
    return {{"constant", s.constant}, {"modes", modes}};
}

FlowKind parse_flavor(const std::string& s) {
    if (s == "NQF") return FlowKind::NQF;
    if (s == "LQF") return FlowKind::LQF;
    throw ConfigError("flavor must be NQF or LQF");
}

DetScheme parse_scheme(const std::string& s) {
    if (s == "imex") return DetScheme::imex;
    if (s == "rk4") return DetScheme::rk4;
    throw ConfigError("scheme must be imex or rk4");
}

NoiseMode parse_noise(const std::string& s) {
    if (s == "cellwise") return NoiseMode::cellwise;
    if (s == "spectral_gram") return NoiseMode::spectral_gram;
    throw ConfigError("noise must be cellwise or spectral_gram");
}

bool finite_positive(double x) { return std::isfinite(x) && x > 0.0; }

}  // namespace

const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names = {
        "flow_det", "flow_sto",  "gmc_build",  "gmc_moments", "gmc_invert", "measure_sample",
        "ibp",      "generator", "stationary", "vol_besq",    "vol_cir",    "vol_compare"};
    return names;
}

RunConfig parse_config(const Json& j) {
    only_keys(j, "root", {"geometry", "model", "scheme", "experiment", "output"});
    RunConfig c;
    if (j.contains("geometry")) {
        const Json& g = j["geometry"];
        only_keys(g, "geometry", {"n", "L", "grid", "trunc", "q_ref_const"});
        read(g, "n", c.geometry.n, "geometry");
        read(g, "L", c.geometry.L, "geometry");
        read(g, "grid", c.geometry.grid, "geometry");
        read(g, "trunc", c.geometry.trunc, "geometry");
        read(g, "q_ref_const", c.geometry.q_ref_const, "geometry");
    }
    if (j.contains("model")) {
        const Json& m = j["model"];
        only_keys(m, "model", {"flavor", "sigma", "gamma", "rho", "f", "phi0"});
        std::string flavor = "NQF";
        read(m, "flavor", flavor, "model");
        c.model.flavor = parse_flavor(flavor);
        read(m, "sigma", c.model.sigma, "model");
        if (m.contains("gamma") && !m["gamma"].is_null()) {
            double g = 0.0;
            read(m, "gamma", g, "model");
            c.model.gamma = g;
        }
        read(m, "rho", c.model.rho, "model");
        if (m.contains("f")) c.model.f = read_field(m["f"], "model.f");
        if (m.contains("phi0")) c.model.phi0 = read_field(m["phi0"], "model.phi0");
    }
    if (j.contains("scheme")) {
        const Json& s = j["scheme"];
        only_keys(s, "scheme", {"dt", "T", "scheme", "noise", "floor", "windows"});
        read(s, "dt", c.scheme.dt, "scheme");
        read(s, "T", c.scheme.T, "scheme");
        std::string name = "imex", noise = "cellwise";
        read(s, "scheme", name, "scheme");
        read(s, "noise", noise, "scheme");
        c.scheme.scheme = parse_scheme(name);
        c.scheme.noise = parse_noise(noise);
        read(s, "floor", c.scheme.floor, "scheme");
        read(s, "windows", c.scheme.windows, "scheme");
    }
    if (j.contains("experiment")) {
        const Json& e = j["experiment"];
        only_keys(e, "experiment", {"checks", "reps", "paths", "seed", "workers"});
        read(e, "checks", c.experiment.checks, "experiment");
        read(e, "reps", c.experiment.reps, "experiment");
        read(e, "paths", c.experiment.paths, "experiment");
        read(e, "seed", c.experiment.seed, "experiment");
        read(e, "workers", c.experiment.workers, "experiment");
    }
    if (j.contains("output")) {
        const Json& o = j["output"];
        only_keys(o, "output", {"dir", "cadence", "formats", "snapshots"});
        read(o, "dir", c.output.dir, "output");
        read(o, "cadence", c.output.cadence, "output");
        read(o, "formats", c.output.formats, "output");
        read(o, "snapshots", c.output.snapshots, "output");
    }
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(bool(in), "cannot open config file " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(j);
}

Json to_json(const RunConfig& c) {
    Json j;
    j["geometry"] = {{"n", c.geometry.n},
                     {"L", c.geometry.L},
                     {"grid", c.geometry.grid},
                     {"trunc", c.geometry.trunc},
                     {"q_ref_const", c.geometry.q_ref_const}};
    Json m = {{"flavor", c.model.flavor == FlowKind::NQF ? "NQF" : "LQF"}, {"sigma", c.model.sigma}};
    m["gamma"] = c.model.gamma ? Json(*c.model.gamma) : Json(nullptr);
    m["rho"] = c.model.rho;
    m["f"] = field_json(c.model.f);
    m["phi0"] = field_json(c.model.phi0);
    j["model"] = m;
    j["scheme"] = {{"dt", c.scheme.dt},
                   {"T", c.scheme.T},
                   {"scheme", c.scheme.scheme == DetScheme::imex ? "imex" : "rk4"},
                   {"noise", c.scheme.noise == NoiseMode::cellwise ? "cellwise" : "spectral_gram"},
                   {"floor", c.scheme.floor},
                   {"windows", c.scheme.windows}};
    j["experiment"] = {{"checks", c.experiment.checks},
                       {"reps", c.experiment.reps},
                       {"paths", c.experiment.paths},
                       {"seed", c.experiment.seed},
                       {"workers", c.experiment.workers}};
    j["output"] = {{"dir", c.output.dir},
                   {"cadence", c.output.cadence},
                   {"formats", c.output.formats},
                   {"snapshots", c.output.snapshots}};
    return j;
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string config_hash(const RunConfig& cfg) {
    // the output block does not change any number
    Json j = to_json(cfg);
    j.erase("output");
    j["experiment"].erase("workers");
    return fnv1a_hex(j.dump());
}

ValidatedConfig validate_config(const RunConfig& cfg) {
    const auto& g = cfg.geometry;
    require(g.n >= 2 && g.n % 2 == 0, "dimension n must be even and >= 2");
    require(g.grid >= 2 * g.trunc, "grid smaller than twice the truncation");
    const auto& m = cfg.model;
    require(std::isfinite(m.sigma) && m.sigma >= 0.0, "sigma must be nonnegative");
    require(finite_positive(m.rho), "rho must be positive");
    const auto& s = cfg.scheme;
    require(finite_positive(s.dt) && std::isfinite(s.T) && s.T >= 0.0, "scheme needs dt > 0 and T >= 0");
    require(finite_positive(s.floor) && s.floor < 1.0, "floor must lie in (0, 1)");
    for (double e : s.windows) require(e > 0.0 && e < 1.0, "window eps must lie in (0, 1)");
    const auto& e = cfg.experiment;
    require(e.workers >= 1, "workers must be >= 1");
    require(e.reps >= 2 && e.paths >= 2, "reps and paths must be >= 2");
    for (const auto& name : e.checks) {
        const auto& all = experiment_names();
        require(std::find(all.begin(), all.end(), name) != all.end(), "unknown experiment '" + name + "'");
    }
    require(cfg.output.cadence >= 1, "cadence must be >= 1");
    for (const auto& f : cfg.output.formats)
        require(f == "json" || f == "csv" || f == "md", "output format must be json, csv or md");

    const Torus geom = make_geometry(cfg);  // remaining geometry checks
    ValidatedConfig v{cfg, {}};
    DerivedConstants& d = v.derived;
    d.a_n = geom.a_n();
    d.gamma = gamma_of_sigma(g.n, m.sigma);
    if (m.gamma) {
        require(std::abs(*m.gamma - d.gamma) <= 1e-12 * std::max(1.0, d.gamma),
                "gamma is derived from sigma; the supplied value is inconsistent");
    }
    v.cfg.model.gamma = d.gamma;
    d.gamma_critical = gamma_critical(g.n);
    d.Q_r1 = 2.0 / d.a_n;
    d.Q_ref1 = geom.Q1();
    d.sigma2_bound = sigma_squared_bound(g.n);
    d.sigma2_margin = d.sigma2_bound - m.sigma * m.sigma;
    d.moment_margin = d.Q_r1 - (m.flavor == FlowKind::LQF ? m.rho : 1.0) * d.Q_ref1;
    d.invariant_margin = -2.0 * d.Q_ref1 - m.sigma * m.sigma;
    d.polyakov_liouville = polyakov_liouville_rho(g.n, m.sigma, m.rho);
    d.synthetic_background = g.q_ref_const != 0.0;

    // sign errors are hard
    make_model(geom, v.cfg);

    // equality counts as a violation even after rounding
    const double slack = 1e-12;
    if (d.sigma2_margin <= slack * d.sigma2_bound) {
        d.exploratory = true;
        d.warnings.push_back("sigma^2 violates the strict bound sigma^2 < " + std::to_string(d.sigma2_bound));
    }
    if (d.moment_margin <= slack * d.Q_r1) {
        d.exploratory = true;
        d.warnings.push_back("moment condition violated: rho Q_ref(1) >= Q_r(1)");
    }
    if (d.synthetic_background)
        d.warnings.push_back("synthetic constant Q_ref background on the flat torus (q_ref_const != 0)");
    return v;
}

Json to_json(const DerivedConstants& d) {
    return {{"a_n", d.a_n},
            {"gamma", d.gamma},
            {"gamma_critical", d.gamma_critical},
            {"Q_r1", d.Q_r1},
            {"Q_ref1", d.Q_ref1},
            {"sigma2_bound", d.sigma2_bound},
            {"sigma2_margin", d.sigma2_margin},
            {"moment_margin", d.moment_margin},
            {"invariant_margin", d.invariant_margin},
            {"polyakov_liouville", d.polyakov_liouville},
            {"exploratory", d.exploratory},
            {"synthetic_background", d.synthetic_background},
            {"warnings", d.warnings}};
}

Torus make_geometry(const RunConfig& cfg) {
    const auto& g = cfg.geometry;
    return Torus(g.n, g.L, g.grid, g.trunc, g.q_ref_const);
}

FieldCoeffs make_field(const Torus& geom, const FieldSpec& spec) {
    FieldCoeffs u = geom.constant(spec.constant);
    for (const auto& t : spec.modes) {
        require(int(t.k.size()) == geom.dim(), "mode frequency vector has the wrong dimension");
        int kmax = 0;
        for (int k : t.k) kmax = std::max(kmax, std::abs(k));
        require(kmax <= geom.trunc(), "mode outside the truncation");
        u = u + t.amp * geom.trig(t.k, t.sine);
    }
    return u;
}

MeasureModel make_model(const Torus& geom, const RunConfig& cfg) {
    PrescribingFunction f = make_prescribing(geom, make_field(geom, cfg.model.f));
    if (cfg.model.flavor == FlowKind::NQF)
        require(f.sign_class == SignClass::strictly_positive, "NQF needs a strictly positive prescribing function");
    else
        require(f.sign_class == SignClass::nonpositive, "LQF needs a nonpositive prescribing function");
    return {cfg.model.flavor, cfg.model.sigma, cfg.model.rho, std::move(f)};
}

std::filesystem::path output_dir(const RunConfig& cfg, const std::optional<std::string>& override_dir) {
    if (override_dir && !override_dir->empty()) return *override_dir;
    if (!cfg.output.dir.empty()) return cfg.output.dir;
    if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
    return "qflow_out";
}

}  // namespace qflow
