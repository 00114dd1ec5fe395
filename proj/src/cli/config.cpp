#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "factorrisk/cli.hpp"

namespace factorrisk::cli {

namespace {

using nlohmann::json;

/// " (line N)" for the first occurrence of "key" in the source text.
std::string where(const std::string& text, const std::string& key)
{
    const auto pos = text.find('"' + key + '"');
    if (pos == std::string::npos) return {};
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n');
    return " (line " + std::to_string(line) + ")";
}

class Reader {
public:
    Reader(const json& obj, const std::string& text, std::string prefix)
        : obj_(obj), text_(text), prefix_(std::move(prefix))
    {
        if (!obj_.is_object()) fail(prefix_.empty() ? "config" : prefix_, "must be a JSON object");
    }

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const
    {
        const std::string leaf = key.substr(key.rfind('.') == std::string::npos ? 0 : key.rfind('.') + 1);
        throw ConfigError("config key '" + key + "'" + where(text_, leaf) + ": " + msg);
    }

    std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

    const json* find(const std::string& key)
    {
        seen_.insert(key);
        auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    template <class T>
    void number(const std::string& key, T& target)
    {
        const json* v = find(key);
        if (!v) return;
        if constexpr (std::is_floating_point_v<T>) {
            if (!v->is_number()) fail(path(key), "expected a number");
            target = v->get<T>();
        } else {
            if (!v->is_number_unsigned()) fail(path(key), "expected a nonnegative integer");
            target = v->get<T>();
        }
    }

    void string(const std::string& key, std::string& target)
    {
        const json* v = find(key);
        if (!v) return;
        if (!v->is_string()) fail(path(key), "expected a string");
        target = v->get<std::string>();
    }

    template <class Fn>
    void with(const std::string& key, Fn&& fn)
    {
        const json* v = find(key);
        if (!v) return;
        try {
            fn(*v);
        } catch (const ConfigError& e) {
            const std::string msg = e.what();
            if (msg.rfind("config key", 0) == 0) throw;
            fail(path(key), msg);
        } catch (const json::exception& e) {
            fail(path(key), e.what());
        }
    }

    void finish() const
    {
        for (const auto& item : obj_.items())
            if (!seen_.count(item.key())) fail(path(item.key()), "unknown key");
    }

private:
    const json& obj_;
    const std::string& text_;
    std::string prefix_;
    std::set<std::string> seen_;
};

template <class Parse>
auto parse_enum(Reader& r, const std::string& key, Parse&& parse)
{
    return [&r, key, parse](const json& v) {
        if (!v.is_string()) r.fail(r.path(key), "expected a string");
        return parse(v.get<std::string>());
    };
}

void check_output_path(const std::filesystem::path& p, const std::string& key)
{
    const auto parent = p.has_parent_path() ? p.parent_path() : std::filesystem::path(".");
    std::error_code ec;
    if (!std::filesystem::is_directory(parent, ec))
        throw ConfigError("config key '" + key + "': directory '" + parent.string() +
                          "' does not exist");
}

}  // namespace

RunConfig parse_run_config(const std::string& text)
{
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto byte = std::min<std::size_t>(e.byte, text.size());
        const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n');
        throw ConfigError("malformed config JSON at line " + std::to_string(line) + ": " + e.what());
    }

    RunConfig c;
    TrialConfig& t = c.trial;
    Reader r(root, text, "");

    r.number("N", t.N);
    r.number("alpha", t.alpha);
    r.with("v", [&](const json& v) { t.v_spec = spec_from_json(v); });
    r.with("b", [&](const json& v) { t.b_spec = spec_from_json(v); });
    r.with("f", [&](const json& v) { t.f_spec = spec_from_json(v); });
    r.with("noise", [&](const json& v) { t.noise = parse_enum(r, "noise", noise_family_from_string)(v); });
    r.number("trials", t.trials);
    r.number("base_seed", t.base_seed);
    r.with("moments_mode",
           [&](const json& v) { t.moments_mode = parse_enum(r, "moments_mode", moments_mode_from_string)(v); });
    r.number("F_scale", t.F_scale);
    r.number("threads", t.threads);
    r.with("prediction_moments", [&](const json& v) {
        c.prediction_moments = parse_enum(r, "prediction_moments", [](const std::string& s) {
            if (s == "analytic") return PredictionMoments::analytic;
            if (s == "sampled") return PredictionMoments::sampled;
            throw ConfigError("expected 'analytic' or 'sampled', got '" + s + "'");
        })(v);
    });
    r.number("beta", c.beta);
    r.number("z_max", c.z_max);

    r.with("tolerances", [&](const json& v) {
        Reader tr(v, text, "tolerances");
        for (const auto& item : v.items()) {
            const Quantity q = quantity_from_string(item.key());
            double tol = 0.0;
            tr.number(item.key(), tol);
            if (!(tol >= 0.0)) tr.fail(tr.path(item.key()), "tolerance must be nonnegative");
            c.tolerances[q] = tol;
        }
        tr.finish();
    });

    r.with("output", [&](const json& v) {
        Reader orr(v, text, "output");
        orr.with("format", [&](const json& f) {
            c.format = parse_enum(orr, "format", [](const std::string& s) {
                if (s == "csv") return OutputFormat::csv;
                if (s == "json") return OutputFormat::json;
                throw ConfigError("expected 'csv' or 'json', got '" + s + "'");
            })(f);
        });
        std::string csv, js;
        orr.string("csv", csv);
        orr.string("json", js);
        if (!csv.empty()) c.csv_path = csv;
        if (!js.empty()) c.json_path = js;
        orr.finish();
    });

    r.with("scan", [&](const json& v) {
        Reader sr(v, text, "scan");
        ScanSettings s;
        sr.with("axis", [&](const json& a) { s.axis = parse_enum(sr, "axis", scan_axis_from_string)(a); });
        sr.with("grid", [&](const json& g) {
            if (!g.is_array()) sr.fail("scan.grid", "expected an array of numbers");
            for (const auto& x : g) {
                if (!x.is_number()) sr.fail("scan.grid", "expected an array of numbers");
                s.grid.push_back(x.get<double>());
            }
        });
        sr.finish();
        c.scan = std::move(s);
    });
    r.finish();

    if (!(std::isfinite(c.beta) && c.beta > 0.0)) r.fail("beta", "must be positive");
    if (!(c.z_max > 0.0)) r.fail("z_max", "must be positive");
    if (t.N < 2) r.fail("N", "must be at least 2");
    if (t.trials < 1) r.fail("trials", "must be at least 1");
    if (!(std::isfinite(t.F_scale) && t.F_scale >= 0.0)) r.fail("F_scale", "must be nonnegative");
    if (!t.v_spec.positive_support())
        r.fail("v", "residual variance spec '" + to_string(t.v_spec.family()) +
                        "' has nonpositive support");
    if (t.v_spec.family() == Family::ar1_gaussian || t.b_spec.family() == Family::ar1_gaussian)
        r.fail(t.v_spec.family() == Family::ar1_gaussian ? "v" : "b",
               "ar1_gaussian is only valid for the factor series");
    if (t.f_spec.family() == Family::lognormal || std::abs(t.f_spec.mean()) > 1e-12)
        r.fail("f", "factor spec must have zero mean");
    if (c.csv_path) check_output_path(*c.csv_path, "output.csv");
    if (c.json_path) check_output_path(*c.json_path, "output.json");
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

void to_json(nlohmann::json& j, const RunConfig& c)
{
    j = c.trial;
    j["threads"] = c.trial.threads;
    j["prediction_moments"] = c.prediction_moments == PredictionMoments::analytic ? "analytic" : "sampled";
    j["beta"] = c.beta;
    j["z_max"] = c.z_max;
    nlohmann::json tol = nlohmann::json::object();
    for (const auto& [q, v] : c.tolerances) tol[to_string(q)] = v;
    j["tolerances"] = tol;
    nlohmann::json out{{"format", c.format == OutputFormat::csv ? "csv" : "json"}};
    if (c.csv_path) out["csv"] = c.csv_path->string();
    if (c.json_path) out["json"] = c.json_path->string();
    j["output"] = out;
    if (c.scan) j["scan"] = {{"axis", to_string(c.scan->axis)}, {"grid", c.scan->grid}};
}

EnsembleMoments prediction_moments(const RunConfig& config)
{
    const TrialConfig& t = config.trial;
    if (config.prediction_moments == PredictionMoments::analytic)
        return analytic_moments(t.v_spec, t.b_spec, analytic_F(t.effective_factor_spec()));
    const TrialMarket market = generate_trial_market(t, 0);
    return compute_moments(market.ensemble, market.factors.F());
}

}  // namespace factorrisk::cli
