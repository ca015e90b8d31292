#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ganfinger/verification.hpp"

namespace ganfinger {

/// Robustness and uniqueness against threshold, with the min(R, U) area shaded.
std::string curves_svg(const ARUCResult& result, const std::string& title);
void write_curves_svg(const std::filesystem::path& path, const ARUCResult& result, const std::string& title);

struct Bar {
  std::string label;
  double value = 0.0;
};

/// Horizontal bars on a fixed [0, 1] axis.
std::string bars_svg(const std::vector<Bar>& bars, const std::string& title);
void write_bars_svg(const std::filesystem::path& path, const std::vector<Bar>& bars, const std::string& title);

}  // namespace ganfinger
