#pragma once

#include <string>
#include <utility>
#include <vector>

namespace tsflow {

// Outcome of one executable property check. `stats` keeps insertion order so
// serialized reports are deterministic.
struct CheckReport {
    std::string name;
    bool pass = false;
    double lhs = 0.0;
    double rhs = 0.0;
    std::vector<std::pair<std::string, double>> stats;
    std::string note;

    void stat(std::string key, double value) { stats.emplace_back(std::move(key), value); }
    double stat_value(const std::string& key) const {
        for (const auto& [k, v] : stats)
            if (k == key) return v;
        return 0.0;
    }
};

}  // namespace tsflow
