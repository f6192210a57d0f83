#include "qflow/record.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "qflow/errors.hpp"
#include "qflow/rng.hpp"

#ifndef QFLOW_VERSION
#define QFLOW_VERSION "unknown"
#endif

namespace qflow {

namespace {

Json number(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string fmt(double x) {
    std::ostringstream o;
    o.precision(17);
    o << x;
    return o.str();
}

std::uint64_t to_little(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        std::uint64_t r = 0;
        for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
        return r;
    }
    return v;
}

}  // namespace

const char* status_name(Status s) {
    switch (s) {
        case Status::pass: return "pass";
        case Status::fail: return "fail";
        case Status::error: return "error";
    }
    return "?";
}

const char* artifact_version() { return QFLOW_VERSION; }

bool RunRecord::passed() const {
    for (const auto& e : experiments)
        if (e.hard_failure()) return false;
    return true;
}

std::string RunRecord::outputs_hash() const { return fnv1a_hex(to_json(*this, false).dump()); }

Json to_json(const ExperimentResult& r, bool with_timing) {
    Json values = Json::array();
    for (const auto& q : r.values) {
        Json v = {{"name", q.name}, {"value", number(q.value)}};
        if (q.se)
            v["se"] = number(*q.se);
        else
            v["exact"] = true;
        values.push_back(v);
    }
    Json j = {{"name", r.name},
              {"title", r.title},
              {"status", status_name(r.status)},
              {"soft", r.soft},
              {"values", values},
              {"diagnostic", r.diagnostic},
              {"artifacts", r.artifacts}};
    if (with_timing) j["wall_seconds"] = r.wall_seconds;
    return j;
}

Json to_json(const RunRecord& r, bool with_timing) {
    Json ex = Json::array();
    for (const auto& e : r.experiments) ex.push_back(to_json(e, with_timing));
    Json j = {{"config_hash", r.config_hash},
              {"version", r.version},
              {"suite", r.suite},
              {"seed", r.seed},
              {"rng", {{"name", r.rng_name}, {"version", r.rng_version}}},
              {"passed", r.passed()},
              {"config", r.config},
              {"derived", r.derived},
              {"experiments", ex}};
    if (with_timing) {
        j["wall_seconds"] = r.wall_seconds;
    } else if (j["config"].is_object()) {
        // scheduling and output settings never change a number
        j["config"].erase("output");
        if (j["config"].contains("experiment")) j["config"]["experiment"].erase("workers");
    }
    return j;
}

RunRecord new_record(const ValidatedConfig& vc, std::string suite) {
    RunRecord r;
    r.config_hash = config_hash(vc.cfg);
    r.config = to_json(vc.cfg);
    r.derived = to_json(vc.derived);
    r.seed = vc.cfg.experiment.seed;
    r.rng_name = kRngName;
    r.rng_version = kRngVersion;
    r.version = artifact_version();
    r.suite = std::move(suite);
    return r;
}

std::filesystem::path emit_report(const RunRecord& r, const std::string& format, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto path = dir / ("record." + format);
    std::ofstream out(path);
    require(bool(out), "cannot write " + path.string());
    if (format == "json") {
        out << to_json(r).dump(2) << "\n";
    } else if (format == "csv") {
        out << "experiment,status,soft,quantity,value,se,exact\n";
        for (const auto& e : r.experiments) {
            if (e.values.empty())
                out << csv_escape(e.name) << "," << status_name(e.status) << "," << e.soft << ",,,,\n";
            for (const auto& q : e.values)
                out << csv_escape(e.name) << "," << status_name(e.status) << "," << e.soft << "," << csv_escape(q.name)
                    << "," << fmt(q.value) << "," << (q.se ? fmt(*q.se) : "") << "," << (q.se ? 0 : 1) << "\n";
        }
    } else if (format == "md") {
        out << "# qflow run " << r.config_hash << "\n\n";
        out << "- suite: " << r.suite << "\n- version: " << r.version << "\n- seed: " << r.seed << "\n- rng: "
            << r.rng_name << " v" << r.rng_version << "\n- result: " << (r.passed() ? "PASS" : "FAIL") << "\n\n";
        out << "| experiment | status | values | diagnostic |\n|---|---|---|---|\n";
        for (const auto& e : r.experiments) {
            std::string vals;
            for (const auto& q : e.values) {
                if (!vals.empty()) vals += "; ";
                vals += q.name + " = " + fmt(q.value) + (q.se ? " ± " + fmt(*q.se) : "");
            }
            out << "| " << e.name << (e.soft ? " (soft)" : "") << " | " << status_name(e.status) << " | " << vals
                << " | " << e.diagnostic << " |\n";
        }
    } else {
        throw ConfigError("output format must be json, csv or md");
    }
    return path;
}

std::filesystem::path write_snapshot(const std::filesystem::path& dir, const std::string& name,
                                     const std::vector<double>& data, const std::vector<std::size_t>& shape,
                                     const Json& meta) {
    std::size_t count = 1;
    for (auto s : shape) count *= s;
    require(count == data.size(), "snapshot shape does not match the data");
    std::filesystem::create_directories(dir);
    const auto bin = dir / (name + ".bin");
    {
        std::ofstream out(bin, std::ios::binary);
        require(bool(out), "cannot write " + bin.string());
        for (double x : data) {
            const std::uint64_t v = to_little(std::bit_cast<std::uint64_t>(x));
            out.write(reinterpret_cast<const char*>(&v), sizeof v);
        }
    }
    Json side = {{"file", name + ".bin"}, {"shape", shape}, {"dtype", "float64"}, {"endianness", "little"}};
    side["meta"] = meta;
    std::ofstream js(dir / (name + ".json"));
    js << side.dump(2) << "\n";
    return bin;
}

Snapshot read_snapshot(const std::filesystem::path& bin_path) {
    auto side_path = bin_path;
    side_path.replace_extension(".json");
    std::ifstream js(side_path);
    require(bool(js), "missing snapshot sidecar " + side_path.string());
    const Json side = Json::parse(js);
    require(side.at("dtype") == "float64" && side.at("endianness") == "little", "unsupported snapshot encoding");
    Snapshot s;
    s.shape = side.at("shape").get<std::vector<std::size_t>>();
    s.meta = side.value("meta", Json::object());
    std::size_t count = 1;
    for (auto d : s.shape) count *= d;
    std::ifstream in(bin_path, std::ios::binary);
    require(bool(in), "cannot read " + bin_path.string());
    s.data.resize(count);
    for (auto& x : s.data) {
        std::uint64_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        require(bool(in), "snapshot is shorter than its shape");
        x = std::bit_cast<double>(to_little(v));
    }
    return s;
}

}  // namespace qflow
