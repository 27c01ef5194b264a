#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "ehvm/explorer.hpp"
#include "ehvm/ir.hpp"

namespace testing {

inline ehvm::explore::Execution run_text(const std::string& text, ehvm::explore::Options opts = {}) {
  auto image = ehvm::explore::prepare(ehvm::ir::parse_module(text));
  ehvm::vm::FirstChoice chooser;
  return ehvm::explore::run_once(image, opts, chooser);
}

inline std::vector<ehvm::explore::Execution> explore_text(const std::string& text,
                                                          ehvm::explore::Options opts = {}) {
  std::vector<ehvm::explore::Execution> out;
  ehvm::explore::explore(ehvm::ir::parse_module(text), opts,
                         [&](const ehvm::explore::Execution& e) { out.push_back(e); });
  return out;
}

inline std::vector<std::string> only(const std::vector<std::string>& events, const std::string& prefix) {
  std::vector<std::string> out;
  for (const auto& e : events)
    if (e.rfind(prefix, 0) == 0) out.push_back(e);
  return out;
}

inline bool has_event(const std::vector<std::string>& events, const std::string& e) {
  return std::find(events.begin(), events.end(), e) != events.end();
}

}  // namespace testing
