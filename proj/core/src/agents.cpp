#include "docs2synth/agents.hpp"

#include <thread>

#include "docs2synth/errors.hpp"
#include "docs2synth/image.hpp"
#include "docs2synth/text.hpp"

namespace docs2synth::agents {

std::string_view to_string(Role role) noexcept {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

ChatMessage ChatMessage::text(Role role, std::string body) {
  return ChatMessage{role, {TextPart{std::move(body)}}};
}

ImagePart image_part_from_bytes(std::string_view bytes) {
  auto codec = image::sniff_codec(bytes);
  if (codec == image::Codec::Unknown) throw UndecodableImage("image part is neither PNG nor JPEG");
  image::probe_size(bytes);
  return ImagePart{image::media_type(codec), text::base64_encode(bytes)};
}

ImagePart image_part_from_file(const std::string& path) {
  std::string bytes;
  try {
    bytes = text::read_file(path);
  } catch (const IoError& e) {
    throw UndecodableImage(e.what());
  }
  return image_part_from_bytes(bytes);
}

ProviderKind parse_provider_kind(std::string_view name) {
  if (name == "openai-compatible") return ProviderKind::OpenAiCompatible;
  if (name == "ollama") return ProviderKind::Ollama;
  if (name == "mock") return ProviderKind::Mock;
  throw ConfigValidationError("kind", "unknown provider kind '" + std::string(name) + "'");
}

std::string_view to_string(ProviderKind kind) noexcept {
  switch (kind) {
    case ProviderKind::OpenAiCompatible: return "openai-compatible";
    case ProviderKind::Ollama: return "ollama";
    case ProviderKind::Mock: return "mock";
  }
  return "mock";
}

RateLimiter::RateLimiter(int requests_per_minute)
    : interval_(requests_per_minute > 0 ? std::chrono::nanoseconds(60'000'000'000LL / requests_per_minute)
                                        : std::chrono::nanoseconds::zero()),
      next_(std::chrono::steady_clock::now()) {}

void RateLimiter::acquire() {
  if (interval_ == std::chrono::nanoseconds::zero()) return;
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mu_);
    auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_);
    next_ = slot + interval_;
  }
  std::this_thread::sleep_until(slot);
}

Provider::Provider(ProviderConfig config)
    : config_(std::move(config)),
      in_flight_(std::clamp(config_.max_in_flight, 1, 1024)),
      limiter_(config_.requests_per_minute) {}

namespace {

void validate_messages(const std::vector<ChatMessage>& messages) {
  if (messages.empty()) throw RequestRejected("no messages to send");
  for (std::size_t i = 0; i < messages.size(); ++i) {
    const auto& m = messages[i];
    if (m.parts.empty()) throw RequestRejected("message " + std::to_string(i) + " has no parts");
    for (const auto& part : m.parts) {
      if (const auto* img = std::get_if<ImagePart>(&part)) {
        auto bytes = text::base64_decode(img->base64_data);
        if (image::sniff_codec(bytes) == image::Codec::Unknown) {
          throw UndecodableImage("message " + std::to_string(i) + " carries an undecodable image");
        }
        image::probe_size(bytes);
      }
    }
  }
}

struct SlotGuard {
  std::counting_semaphore<1024>& sem;
  explicit SlotGuard(std::counting_semaphore<1024>& s) : sem(s) { sem.acquire(); }
  ~SlotGuard() { sem.release(); }
};

// Index one past the '}' closing the object that opens at `open`, or npos.
std::size_t match_object(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    char c = s[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

}  // namespace

AgentReply Provider::complete(const std::vector<ChatMessage>& messages, const CallOptions& options) {
  validate_messages(messages);
  SlotGuard slot(in_flight_);
  limiter_.acquire();
  double temperature = config_.temperature.value_or(options.default_temperature);
  auto start = std::chrono::steady_clock::now();
  auto reply = do_complete(messages, temperature);
  if (config_.kind != ProviderKind::Mock) {
    reply.latency_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
  }
  return reply;
}

std::string concatenated_user_text(const std::vector<ChatMessage>& messages) {
  std::string out;
  for (const auto& m : messages) {
    if (m.role != Role::User) continue;
    for (const auto& part : m.parts) {
      if (const auto* t = std::get_if<TextPart>(&part)) {
        if (!out.empty()) out.push_back('\n');
        out += t->text;
      }
    }
  }
  return out;
}

std::optional<nlohmann::json> extract_json_object(std::string_view reply) {
  for (std::size_t open = reply.find('{'); open != std::string_view::npos; open = reply.find('{', open + 1)) {
    auto end = match_object(reply, open);
    if (end == std::string_view::npos) continue;
    auto parsed = nlohmann::json::parse(reply.substr(open, end - open), nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object()) return parsed;
  }
  return std::nullopt;
}

JsonReply complete_json(Provider& provider, std::vector<ChatMessage> messages, std::string_view schema_hint,
                        const CallOptions& options) {
  if (!schema_hint.empty()) {
    messages.push_back(ChatMessage::text(
        Role::User, "Respond with a single JSON object of this shape: " + std::string(schema_hint)));
  }
  JsonReply out;
  auto first = provider.complete(messages, options);
  out.raw_replies.push_back(first.text);
  if (auto value = extract_json_object(first.text)) {
    out.value = std::move(*value);
    return out;
  }
  messages.push_back(ChatMessage::text(Role::Assistant, first.text));
  messages.push_back(ChatMessage::text(Role::User, std::string(kJsonRepairPrompt)));
  auto second = provider.complete(messages, options);
  out.raw_replies.push_back(second.text);
  out.retries_used = 1;
  if (auto value = extract_json_object(second.text)) {
    out.value = std::move(*value);
    return out;
  }
  throw MalformedResponse("provider '" + provider.config().name + "' returned no JSON object twice",
                          out.raw_replies);
}

std::shared_ptr<Provider> make_provider(const ProviderConfig& config) {
  switch (config.kind) {
    case ProviderKind::Mock: {
      auto mock = mock_provider_from_fixture(config.fixture_path, config.name);
      // Keep the caller's full config (limits, temperature) on the instance.
      return std::make_shared<MockProvider>(config, mock->rules(), mock->default_response());
    }
    case ProviderKind::OpenAiCompatible:
    case ProviderKind::Ollama: return std::make_shared<OpenAiCompatibleProvider>(config);
  }
  throw ConfigValidationError("kind", "unsupported provider kind");
}

}  // namespace docs2synth::agents
