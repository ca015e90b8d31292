#include "ganfinger/log.hpp"

#include <cstdarg>
#include <cstdio>
#include <string>

#include <spdlog/spdlog.h>

namespace ganfinger::log {

namespace {

std::string vformat(const char* format, va_list args) {
  va_list copy;
  va_copy(copy, args);
  const int n = std::vsnprintf(nullptr, 0, format, copy);
  va_end(copy);
  std::string out(n > 0 ? static_cast<std::size_t>(n) : 0, '\0');
  if (n > 0) std::vsnprintf(out.data(), out.size() + 1, format, args);
  return out;
}

}  // namespace

void set_level(Level level) {
  switch (level) {
    case Level::debug: spdlog::set_level(spdlog::level::debug); break;
    case Level::info: spdlog::set_level(spdlog::level::info); break;
    case Level::warn: spdlog::set_level(spdlog::level::warn); break;
    case Level::error: spdlog::set_level(spdlog::level::err); break;
  }
}

#define GANFINGER_LOG_FN(name, call)        \
  void name(const char* format, ...) {      \
    va_list args;                           \
    va_start(args, format);                 \
    const auto msg = vformat(format, args); \
    va_end(args);                           \
    spdlog::call("{}", msg);                \
  }

GANFINGER_LOG_FN(info, info)
GANFINGER_LOG_FN(warn, warn)
GANFINGER_LOG_FN(error, error)

#undef GANFINGER_LOG_FN

}  // namespace ganfinger::log
