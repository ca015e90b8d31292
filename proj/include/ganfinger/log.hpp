#pragma once

// printf-style front end to spdlog. Kept free of torch headers: libtorch
// ships its own fmt, which clashes with the one spdlog was built against.

namespace ganfinger::log {

enum class Level { debug, info, warn, error };

void set_level(Level level);
void info(const char* format, ...) __attribute__((format(printf, 1, 2)));
void warn(const char* format, ...) __attribute__((format(printf, 1, 2)));
void error(const char* format, ...) __attribute__((format(printf, 1, 2)));

}  // namespace ganfinger::log
