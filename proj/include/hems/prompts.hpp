// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "hems/schedule.hpp"

namespace hems {

// Orchestrator prompt variants. They differ only in the analytical-query
// guidance spliced into the workflow section.
enum class PromptStage { kBaseline, kMinimalGuidance, kExplicitWorkflow };

std::string_view to_string(PromptStage stage);
std::optional<PromptStage> parse_stage(std::string_view text);

inline constexpr std::string_view kPromptLibraryVersion = "2025.10-1";

// First line of every orchestrator prompt; specialists start with their own
// "# <Appliance> Scheduling Agent" header.
inline constexpr std::string_view kOrchestratorHeader = "# HEMS Orchestrator Agent";

class PromptLibrary {
 public:
  // Built from the embedded assets.
  static const PromptLibrary& builtin();

  PromptLibrary(std::string orchestrator_template, std::string minimal_guidance,
                std::string explicit_guidance, std::string washing_machine, std::string dishwasher,
                std::string ev_charger);

  std::string orchestrator(PromptStage stage) const;
  const std::string& specialist(ApplianceId id) const;
  // Text inserted for the stage; empty for the baseline.
  const std::string& guidance(PromptStage stage) const;
  std::string_view version() const noexcept { return kPromptLibraryVersion; }

 private:
  std::string template_;
  std::string minimal_;
  std::string explicit_;
  std::string specialists_[3];
  std::string empty_;
};

// "washing_machine_agent", "dishwasher_agent", "ev_charger_agent".
std::string agent_name(ApplianceId id);
// Also accepts the bare appliance id, "<id>_agent", "wm", "dw", "ev" and
// "ev_agent", case-insensitively.
std::optional<ApplianceId> parse_agent_name(std::string_view name);

}  // namespace hems
