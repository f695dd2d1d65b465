#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tolcal/core.hpp"

namespace tolcal {

// Resample count for the resampling proxy when the caller does not pick one.
inline constexpr int kDefaultResamples = 20;

struct ElicitConfig {
  std::string endpoint_url = "https://api.openai.com/v1/chat/completions";
  // Name of the environment variable holding the API key. Empty sends no
  // Authorization header (local servers).
  std::string api_key_env_var = "OPENAI_API_KEY";
  std::string model_name;
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 4096;
  int retries = 3;
  int resamples = 1;  // > 1 gathers samples for the resampling proxy
  int concurrency = 4;
  int initial_backoff_ms = 500;
  int timeout_seconds = 120;
  bool with_confidence = true;

  void validate() const;
};

struct ConstructPrompt {
  std::string attribute_name;
  std::string definition_text;
  double tolerance = 10.0;

  void validate() const;
};

// Rating prompt for one text and one attribute; with_confidence appends the
// accuracy_estimate construct for the configured tolerance.
std::string build_prompt(std::string_view text, const ConstructPrompt& construct, bool with_confidence);

struct ParsedResponse {
  double score = 0.0;
  std::optional<double> confidence;  // unit scale
};

// Reads the first JSON object in `body` (prose and code fences tolerated).
// Throws parse (or range) errors whose message carries the raw body.
ParsedResponse parse_response(std::string_view body, std::string_view attribute_name, bool with_confidence);

// First balanced {...} in the text, honouring JSON string escapes.
std::optional<std::string> first_json_object(std::string_view text);

// Chat-completions request body for one prompt.
std::string chat_request_body(std::string_view prompt, const ElicitConfig& cfg);
// choices[0].message.content of a chat-completions response.
std::string message_content(std::string_view response_body);

struct TextItem {
  std::string id;
  std::string text;
  double y_true = 0.0;
};

std::vector<TextItem> load_text_items(const std::filesystem::path& path);

struct ElicitFailure {
  std::string id;
  std::string reason;
};

struct ElicitResult {
  Dataset dataset;
  std::vector<ElicitFailure> failures;
  int retries = 0;
  std::vector<std::string> log;
};

// One request per text (resamples requests when cfg.resamples > 1) against a
// chat-completions endpoint. Transient failures back off exponentially up to
// cfg.retries; an authentication failure aborts the batch with an auth error.
ElicitResult elicit_dataset(const std::vector<TextItem>& texts, const ConstructPrompt& construct,
                            const ElicitConfig& cfg, std::string dataset_name = "elicited");

}  // namespace tolcal
