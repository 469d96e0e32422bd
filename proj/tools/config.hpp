#pragma once

#include <lorentzavg/errors.hpp>

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lorentzavg::cli {

using nlohmann::json;

// Minimal structural schema: every object lists its allowed keys.
struct Schema {
    enum class Kind { number, integer, boolean, string, numbers, number_map, object } kind = Kind::object;
    std::map<std::string, Schema> fields;
    std::vector<std::string> choices; // for strings

    static Schema num() { return {Kind::number, {}, {}}; }
    static Schema integer() { return {Kind::integer, {}, {}}; }
    static Schema flag() { return {Kind::boolean, {}, {}}; }
    static Schema str(std::vector<std::string> choices = {}) { return {Kind::string, {}, std::move(choices)}; }
    static Schema nums() { return {Kind::numbers, {}, {}}; }
    static Schema num_map() { return {Kind::number_map, {}, {}}; }
    static Schema obj(std::map<std::string, Schema> f) { return {Kind::object, std::move(f), {}}; }
};

inline void validate(const json& j, const Schema& s, const std::string& path)
{
    using K = Schema::Kind;
    auto fail = [&](const std::string& what) { throw ConfigError(path + ": " + what); };
    switch (s.kind) {
    case K::number:
        if (!j.is_number()) fail("expected a number");
        break;
    case K::integer:
        if (!j.is_number_integer() && !j.is_number_unsigned()) fail("expected an integer");
        break;
    case K::boolean:
        if (!j.is_boolean()) fail("expected true or false");
        break;
    case K::string:
        if (!j.is_string()) fail("expected a string");
        if (!s.choices.empty()) {
            const auto v = j.get<std::string>();
            bool ok = false;
            for (const auto& c : s.choices) ok = ok || c == v;
            if (!ok) {
                std::string list;
                for (const auto& c : s.choices) list += (list.empty() ? "" : ", ") + c;
                fail("'" + v + "' is not one of: " + list);
            }
        }
        break;
    case K::numbers:
        if (!j.is_array()) fail("expected an array of numbers");
        for (std::size_t k = 0; k < j.size(); ++k)
            if (!j[k].is_number()) fail("element " + std::to_string(k) + " is not a number");
        break;
    case K::number_map:
        if (!j.is_object()) fail("expected an object of numbers");
        for (const auto& [key, v] : j.items())
            if (!v.is_number()) throw ConfigError(path + "." + key + ": expected a number");
        break;
    case K::object:
        if (!j.is_object()) fail("expected an object");
        for (const auto& [key, v] : j.items()) {
            auto it = s.fields.find(key);
            if (it == s.fields.end()) throw ConfigError(path + ": unknown key '" + key + "'");
            validate(v, it->second, path + "." + key);
        }
        break;
    }
}

inline const std::vector<std::string>& command_names()
{
    static const std::vector<std::string> names{"simulate", "ensemble",  "compare", "sweep",
                                                "fluid-check", "beamline", "offset", "validity"};
    return names;
}

inline Schema config_schema()
{
    using S = Schema;
    const S field = S::obj({{"preset", S::str()}, {"params", S::num_map()}, {"charge", S::num()}});
    const S layout = S::obj({{"kind", S::str({"point", "gaussian", "lattice"})},
                             {"spread", S::num()},
                             {"spacing", S::num()},
                             {"sites", S::integer()}});
    const S ensemble = S::obj({{"generator", S::str({"delta", "momentum-ball", "rapidity-cap", "rapidity-gaussian",
                                                      "csv"})},
                               {"energy", S::num()},
                               {"alpha", S::num()},
                               {"n", S::integer()},
                               {"seed", S::integer()},
                               {"axis", S::integer()},
                               {"velocity", S::nums()},
                               {"r0", S::num()},
                               {"r_cap", S::num()},
                               {"sigma", S::num()},
                               {"cutoff", S::num()},
                               {"path", S::str()},
                               {"layout", layout}});
    const S integrator = S::obj({{"method", S::str({"rk4", "rk45"})},
                                 {"step", S::num()},
                                 {"tolerance", S::num()},
                                 {"renormalize", S::flag()},
                                 {"record_every", S::integer()}});
    const S span = S::obj({{"t1", S::num()}, {"samples", S::integer()}, {"times", S::nums()}, {"dt", S::num()}});
    const S initial = S::obj({{"x", S::nums()},
                              {"velocity", S::nums()},
                              {"support_direction", S::nums()},
                              {"support_fraction", S::num()}});
    const S constants = S::num_map();
    const S sweep = S::obj({{"parameter", S::str({"alpha", "energy", "t"})},
                            {"values", S::nums()},
                            {"measure", S::str({"position", "velocity", "fluid"})},
                            {"t", S::num()}});
    const S assertions = S::obj({{"max_position_separation", S::num()},
                                 {"max_velocity_separation", S::num()},
                                 {"within_bound", S::flag()},
                                 {"slope_min", S::num()},
                                 {"slope_max", S::num()},
                                 {"min_r2", S::num()},
                                 {"max_wronskian_drift", S::num()},
                                 {"max_closed_form_error", S::num()},
                                 {"max_offset", S::num()}});
    const S fluid = S::obj({{"dt", S::num()},
                            {"t0", S::num()},
                            {"sites", S::integer()},
                            {"spacing", S::num()},
                            {"cells", S::integer()},
                            {"bins", S::integer()},
                            {"allowance", S::num()},
                            {"averaged_transport", S::flag()},
                            {"form", S::str({"covariant", "printed"})}});
    const S beamline = S::obj({{"preset", S::str()},
                               {"params", S::num_map()},
                               {"dipole_sign", S::num()},
                               {"xi", S::nums()},
                               {"xip", S::nums()},
                               {"tau1", S::num()},
                               {"step", S::num()},
                               {"jacobi", S::flag()}});
    const S offset = S::obj({{"mode", S::str({"full", "frozen"})}, {"optics", S::obj({{"preset", S::str()},
                                                                                         {"params", S::num_map()},
                                                                                         {"dipole_sign", S::num()}})}});
    const S validity = S::obj({{"E0", S::num()},
                               {"alpha", S::num()},
                               {"fnorm", S::num()},
                               {"L_geom", S::num()},
                               {"L_bar", S::num()},
                               {"constants", S::num_map()}});
    return S::obj({{"command", S::str(command_names())},
                   {"field", field},
                   {"ensemble", ensemble},
                   {"integrator", integrator},
                   {"span", span},
                   {"initial", initial},
                   {"connection", S::str({"lorentz", "averaged"})},
                   {"parametrization", S::str({"tau", "t"})},
                   {"constants", constants},
                   {"sweep", sweep},
                   {"assertions", assertions},
                   {"fluid", fluid},
                   {"beamline", beamline},
                   {"offset", offset},
                   {"validity", validity},
                   {"threads", S::integer()}});
}

// Typed access with the dotted path in every error message.
class Section {
public:
    Section(const json* node, std::string path) : node_(node), path_(std::move(path)) {}

    bool present() const { return node_ && !node_->is_null(); }
    bool has(const std::string& key) const { return present() && node_->contains(key); }
    Section sub(const std::string& key) const
    {
        return {has(key) ? &(*node_)[key] : nullptr, path_ + "." + key};
    }
    const std::string& path() const { return path_; }

    double number(const std::string& key) const
    {
        if (!has(key)) throw ConfigError(path_ + "." + key + ": required");
        return (*node_)[key].get<double>();
    }
    double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }
    long long integer(const std::string& key) const
    {
        if (!has(key)) throw ConfigError(path_ + "." + key + ": required");
        return (*node_)[key].get<long long>();
    }
    long long integer(const std::string& key, long long fallback) const { return has(key) ? integer(key) : fallback; }
    std::string text(const std::string& key) const
    {
        if (!has(key)) throw ConfigError(path_ + "." + key + ": required");
        return (*node_)[key].get<std::string>();
    }
    std::string text(const std::string& key, const std::string& fallback) const
    {
        return has(key) ? text(key) : fallback;
    }
    bool flag(const std::string& key, bool fallback) const { return has(key) ? (*node_)[key].get<bool>() : fallback; }
    std::vector<double> numbers(const std::string& key, std::size_t expected = 0) const
    {
        if (!has(key)) throw ConfigError(path_ + "." + key + ": required");
        auto v = (*node_)[key].get<std::vector<double>>();
        if (expected && v.size() != expected)
            throw ConfigError(path_ + "." + key + ": expected " + std::to_string(expected) + " numbers");
        return v;
    }
    std::map<std::string, double> number_map(const std::string& key) const
    {
        if (!has(key)) return {};
        return (*node_)[key].get<std::map<std::string, double>>();
    }

private:
    const json* node_;
    std::string path_;
};

} // namespace lorentzavg::cli
