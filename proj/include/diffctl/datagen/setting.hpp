#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "diffctl/error.hpp"

namespace diffctl {

/// Observation/control regime. PO hides the state on x in [1/4, 3/4], PC
/// forces the control to zero there.
enum class SettingKind { PO_FC, FO_PC, PO_PC, FO_FC };

inline std::string to_string(SettingKind k) {
    switch (k) {
    case SettingKind::PO_FC: return "PO-FC";
    case SettingKind::FO_PC: return "FO-PC";
    case SettingKind::PO_PC: return "PO-PC";
    case SettingKind::FO_FC: return "FO-FC";
    }
    return "?";
}

inline SettingKind parse_setting_kind(std::string_view s) {
    if (s == "PO-FC") return SettingKind::PO_FC;
    if (s == "FO-PC") return SettingKind::FO_PC;
    if (s == "PO-PC") return SettingKind::PO_PC;
    if (s == "FO-FC") return SettingKind::FO_FC;
    throw ConfigError("unknown setting kind '" + std::string(s) + "' (expected PO-FC, FO-PC, PO-PC or FO-FC)");
}

struct TaskSetting {
    SettingKind kind = SettingKind::FO_FC;
    std::vector<std::uint8_t> observation_mask; // 1 = observed
    std::vector<std::uint8_t> control_mask;     // 1 = controllable
    double control_gain = 1.0;

    bool partial_observation() const { return kind == SettingKind::PO_FC || kind == SettingKind::PO_PC; }
    bool partial_control() const { return kind == SettingKind::FO_PC || kind == SettingKind::PO_PC; }
    int n_x() const { return static_cast<int>(observation_mask.size()); }

    /// Hidden/uncontrollable indices are the half-open range [n_x/4, 3*n_x/4).
    static std::pair<int, int> central_range(int n_x) { return {n_x / 4, (3 * n_x) / 4}; }

    static TaskSetting make(SettingKind kind, int n_x) {
        if (n_x < 3) throw ConfigError("TaskSetting: n_x must be >= 3");
        TaskSetting s;
        s.kind = kind;
        s.observation_mask.assign(n_x, 1);
        s.control_mask.assign(n_x, 1);
        const auto [lo, hi] = central_range(n_x);
        if (s.partial_observation())
            for (int i = lo; i < hi; ++i) s.observation_mask[i] = 0;
        if (s.partial_control()) {
            for (int i = lo; i < hi; ++i) s.control_mask[i] = 0;
            s.control_gain = 2.0;
        }
        return s;
    }
};

} // namespace diffctl
