#include "ewm/arm.hpp"

#include <algorithm>
#include <cctype>

namespace ewm {

namespace {

std::string upper(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    while (!out.empty() && out.back() == ' ') out.pop_back();
    while (!out.empty() && out.front() == ' ') out.erase(out.begin());
    return out;
}

} // namespace

std::string_view to_string(Arm a) noexcept {
    switch (a) {
    case Arm::NT: return "NT";
    case Arm::T: return "T";
    case Arm::O: return "O";
    }
    return "?";
}

std::string_view to_string(Choice c) noexcept { return c == Choice::T ? "T" : "NT"; }

std::optional<Arm> parse_arm(std::string_view token) noexcept {
    const auto u = upper(token);
    if (u == "NT") return Arm::NT;
    if (u == "T") return Arm::T;
    if (u == "O") return Arm::O;
    return std::nullopt;
}

std::optional<Choice> parse_choice(std::string_view token) noexcept {
    const auto u = upper(token);
    if (u == "NT") return Choice::NT;
    if (u == "T") return Choice::T;
    return std::nullopt;
}

} // namespace ewm
