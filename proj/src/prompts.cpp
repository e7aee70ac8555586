// SPDX-License-Identifier: Apache-2.0
#include "hems/prompts.hpp"

#include "hems/assets.hpp"
#include "hems/error.hpp"
#include "hems/text.hpp"

namespace hems {
namespace {

constexpr std::string_view kPlaceholder = "{{ANALYTICAL_GUIDANCE}}\n";

}  // namespace

std::string_view to_string(PromptStage stage) {
  switch (stage) {
    case PromptStage::kBaseline: return "baseline";
    case PromptStage::kMinimalGuidance: return "minimal_guidance";
    case PromptStage::kExplicitWorkflow: return "explicit_workflow";
  }
  return "baseline";
}

std::optional<PromptStage> parse_stage(std::string_view text) {
  const auto t = text::to_lower(text::trim(text));
  if (t == "baseline") return PromptStage::kBaseline;
  if (t == "minimal_guidance" || t == "minimal") return PromptStage::kMinimalGuidance;
  if (t == "explicit_workflow" || t == "explicit") return PromptStage::kExplicitWorkflow;
  return std::nullopt;
}

PromptLibrary::PromptLibrary(std::string orchestrator_template, std::string minimal_guidance,
                             std::string explicit_guidance, std::string washing_machine,
                             std::string dishwasher, std::string ev_charger)
    : template_(std::move(orchestrator_template)),
      minimal_(std::move(minimal_guidance)),
      explicit_(std::move(explicit_guidance)),
      specialists_{std::move(washing_machine), std::move(dishwasher), std::move(ev_charger)} {
  if (template_.find(kPlaceholder) == std::string::npos) {
    throw Error(ErrorCode::kConfig, "orchestrator prompt template lacks the guidance placeholder");
  }
}

const PromptLibrary& PromptLibrary::builtin() {
  static const PromptLibrary library(std::string(embedded_asset("prompts/orchestrator.md")),
                                     std::string(embedded_asset("prompts/guidance_minimal.md")),
                                     std::string(embedded_asset("prompts/guidance_explicit.md")),
                                     std::string(embedded_asset("prompts/washing_machine.md")),
                                     std::string(embedded_asset("prompts/dishwasher.md")),
                                     std::string(embedded_asset("prompts/ev_charger.md")));
  return library;
}

const std::string& PromptLibrary::guidance(PromptStage stage) const {
  switch (stage) {
    case PromptStage::kMinimalGuidance: return minimal_;
    case PromptStage::kExplicitWorkflow: return explicit_;
    case PromptStage::kBaseline: break;
  }
  return empty_;
}

std::string PromptLibrary::orchestrator(PromptStage stage) const {
  std::string out = template_;
  const auto pos = out.find(kPlaceholder);
  const auto& block = guidance(stage);
  // The baseline drops the placeholder line entirely, so the other stages are
  // the baseline with their block inserted at one point.
  out.replace(pos, kPlaceholder.size(), block.empty() ? std::string() : "\n" + block);
  return out;
}

const std::string& PromptLibrary::specialist(ApplianceId id) const {
  return specialists_[static_cast<int>(id)];
}

std::string agent_name(ApplianceId id) { return std::string(to_string(id)) + "_agent"; }

std::optional<ApplianceId> parse_agent_name(std::string_view name) {
  auto t = text::to_lower(text::trim(name));
  constexpr std::string_view kSuffix = "_agent";
  if (t.size() > kSuffix.size() && t.ends_with(kSuffix)) t.resize(t.size() - kSuffix.size());
  if (t == "wm") return ApplianceId::kWashingMachine;
  if (t == "dw") return ApplianceId::kDishwasher;
  if (t == "ev") return ApplianceId::kEvCharger;
  return parse_appliance_id(t);
}

}  // namespace hems
