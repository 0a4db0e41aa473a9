#pragma once

#include <functional>
#include <iostream>
#include <string>
#include <utility>

namespace echoef::log {

enum class Level { Debug, Info, Warn };

using Sink = std::function<void(Level, const std::string&)>;

inline Sink& sink() {
  static Sink s = [](Level level, const std::string& msg) {
    if (level == Level::Debug) return;
    std::clog << (level == Level::Warn ? "[warn] " : "[info] ") << msg << '\n';
  };
  return s;
}

inline void set_sink(Sink s) { sink() = std::move(s); }

inline void debug(const std::string& msg) { sink()(Level::Debug, msg); }
inline void info(const std::string& msg) { sink()(Level::Info, msg); }
inline void warn(const std::string& msg) { sink()(Level::Warn, msg); }

/// Warns on the 1st, 1001st, ... call sharing `counter`.
inline void warn_throttled(std::size_t& counter, const std::string& msg) {
  if (counter++ % 1000 == 0) warn(msg + " (" + std::to_string(counter) + " so far)");
}

}  // namespace echoef::log
