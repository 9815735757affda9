#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace ewm {

/// Assignment arm. The enumerator order NT < T < O is the tie-breaking order
/// used everywhere a deterministic choice between arms is needed.
enum class Arm : unsigned char { NT = 0, T = 1, O = 2 };

/// Realized take-up. Compulsory arms force it; the opt-in arm leaves it to the household.
enum class Choice : unsigned char { NT = 0, T = 1 };

inline constexpr std::size_t kNumArms = 3;
inline constexpr std::array<Arm, kNumArms> kAllArms{Arm::NT, Arm::T, Arm::O};

constexpr std::size_t index(Arm a) noexcept { return static_cast<std::size_t>(a); }

std::string_view to_string(Arm a) noexcept;
std::string_view to_string(Choice c) noexcept;

// Case-insensitive; nullopt on anything outside {T, NT, O} / {T, NT}.
std::optional<Arm> parse_arm(std::string_view token) noexcept;
std::optional<Choice> parse_choice(std::string_view token) noexcept;

/// Per-arm array indexed by Arm.
template <typename V>
using PerArm = std::array<V, kNumArms>;

} // namespace ewm
