#pragma once

#include "ewm/arm.hpp"
#include "ewm/welfare.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ewm {

/// One household-interval record. `arm` is the exposure in that interval:
/// T sets the compulsory-treatment indicator, O the opt-in indicator, NT neither.
struct PanelObservation {
    std::string household;
    std::string interval;
    double log_y = 0.0;
    Arm arm = Arm::NT;
};

// Long format `household,interval,log_y,arm`.
std::vector<PanelObservation> load_panel_csv(const std::filesystem::path& path);
std::vector<PanelObservation> parse_panel_csv(std::string_view text);
std::string panel_to_csv(const std::vector<PanelObservation>& panel);

struct PanelItt {
    Estimate tau_T; // household-clustered SEs
    Estimate tau_O;
    std::size_t observations = 0;
    std::size_t households = 0;
    std::size_t intervals = 0;
    bool balanced = false;
    std::vector<std::string> warnings;
};

/// log_y = tau_T * Z^T + tau_O * Z^O + household FE + interval FE + e.
/// Throws DataError on duplicate (household, interval) pairs, non-finite
/// log_y, fewer than two intervals, or fewer than two households exposed to
/// each of T and O; NumericError when the indicators are collinear with the
/// fixed effects.
PanelItt panel_itt(const std::vector<PanelObservation>& panel);

} // namespace ewm
