#pragma once

#include "lowshot/error.hpp"

#include <json.hpp>

#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

namespace lowshot::detail {

using ordered_json = nlohmann::ordered_json;

// Strict view of a JSON object: typed reads report the dotted key path on
// failure and done() rejects keys that were never read.
class Fields {
public:
    Fields(const ordered_json& obj, std::string path) : obj_(&obj), path_(std::move(path)) {
        if (!obj.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    const std::string& path() const noexcept { return path_; }
    std::string path_of(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(const std::string& key) const { return obj_->contains(key); }

    // Leaves `out` unchanged when the key is absent, unless `required`.
    template <class T>
    void get(const std::string& key, T& out, bool required = false) {
        seen_.insert(key);
        if (!obj_->contains(key)) {
            if (required) throw ConfigError(path_of(key), "missing");
            return;
        }
        read(obj_->at(key), path_of(key), out);
    }

    Fields sub(const std::string& key) {
        seen_.insert(key);
        if (!obj_->contains(key)) throw ConfigError(path_of(key), "missing");
        return Fields(obj_->at(key), path_of(key));
    }

    const ordered_json& raw(const std::string& key) {
        seen_.insert(key);
        if (!obj_->contains(key)) throw ConfigError(path_of(key), "missing");
        return obj_->at(key);
    }

    void done() const {
        for (const auto& item : obj_->items())
            if (!seen_.count(item.key())) throw ConfigError(path_of(item.key()), "unknown key");
    }

    template <class T>
    static void read(const ordered_json& v, const std::string& path, T& out) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(path, "expected a boolean");
            out = v.get<bool>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
                throw ConfigError(path, "expected a non-negative integer");
            const auto u = v.get<std::uint64_t>();
            if (u > static_cast<std::uint64_t>(std::numeric_limits<T>::max())) throw ConfigError(path, "integer out of range");
            out = static_cast<T>(u);
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(path, "expected a number");
            out = v.get<double>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(path, "expected a string");
            out = v.get<std::string>();
        } else {
            if (!v.is_array()) throw ConfigError(path, "expected an array");
            out.clear();
            for (std::size_t i = 0; i < v.size(); ++i) {
                typename T::value_type e{};
                read(v[i], path + "[" + std::to_string(i) + "]", e);
                out.push_back(e);
            }
        }
    }

private:
    const ordered_json* obj_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace lowshot::detail
