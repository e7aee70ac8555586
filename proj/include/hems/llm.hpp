// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace hems::llm {

enum class Role { kSystem, kUser, kAssistant };
std::string_view to_string(Role role);

struct Message {
  Role role;
  std::string content;
};

struct ChatRequest {
  std::string model_id;
  std::string system_prompt;
  std::vector<Message> messages;
  double temperature = 0.0;
  int max_tokens = 2048;
};

struct ChatResponse {
  std::string content;
  int prompt_tokens = 0;
  int completion_tokens = 0;
  long long latency_ms = 0;
};

// Whitespace-token count of the system prompt plus every message.
int count_prompt_tokens(const ChatRequest& request);

// Must be callable from several runs at once.
class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  // Throws Error(kBackendUnavailable) or Error(kRateLimited).
  virtual ChatResponse complete(const ChatRequest& request) = 0;
  virtual std::string name() const = 0;
};

// Offline stand-in for a hosted model. A rule engine over the conversation it
// is handed: it recognises the orchestrator and specialist prompts, reads the
// wrapped user request and the observations so far, and emits the next step
// of the documented workflow. No state survives between calls.
class ScriptedBackend final : public LlmBackend {
 public:
  ChatResponse complete(const ChatRequest& request) override;
  std::string name() const override { return "scripted"; }
  std::size_t call_count() const noexcept { return calls_.load(); }

 private:
  std::atomic<std::size_t> calls_{0};
};

// Policy functions behind ScriptedBackend, exposed for tests.
std::string scripted_orchestrator_policy(const ChatRequest& request);
std::string scripted_specialist_policy(const ChatRequest& request);

// Request body for an OpenAI-style chat-completions endpoint.
nlohmann::json to_chat_completions_body(const ChatRequest& request);

}  // namespace hems::llm
