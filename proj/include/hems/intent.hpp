// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "hems/schedule.hpp"

// Keyword-level reading of a user request. Used by the scripted backend to
// pick a workflow and by the orchestrator to attach user deadlines.
namespace hems {

enum class RequestKind {
  kOutOfScope,   // not about home energy at all
  kUnclear,      // energy related, but no appliance or price question found
  kScheduling,
  kAnalytical,
};

enum class WindowQuery { kMostExpensive, kCheapest };

struct RequestIntent {
  RequestKind kind = RequestKind::kOutOfScope;
  std::vector<ApplianceId> appliances;  // canonical order, no duplicates
  bool ev_keywords = false;             // any of the calendar-trigger words
  WindowQuery query = WindowQuery::kMostExpensive;
  int window_slots = 4;                 // analytical window, defaults to 1 hour
};

RequestIntent classify_request(std::string_view text);

// "by 8am", "by 07:30", "before 6 pm", "by noon": the exclusive finish slot.
std::optional<int> extract_user_deadline(std::string_view text);

}  // namespace hems
