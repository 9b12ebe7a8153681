#pragma once

#include <cstdint>
#include <string_view>

namespace flc {

enum class AlgoKind : std::uint8_t { kFedAvg = 0, kIceAdmm = 1, kIiAdmm = 2 };

std::string_view to_string(AlgoKind kind);
/// Accepts "fedavg", "iceadmm", "iiadmm".
AlgoKind parse_algo_kind(std::string_view name);

}  // namespace flc
