#include "tolcal/elicit.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace tolcal {

using nlohmann::json;

void ElicitConfig::validate() const {
  if (endpoint_url.empty()) fail(ErrorKind::invalid_input, "endpoint_url is empty");
  if (model_name.empty()) fail(ErrorKind::invalid_input, "model_name is empty");
  if (retries < 0) fail(ErrorKind::invalid_input, "retries must be >= 0");
  if (resamples < 1) fail(ErrorKind::invalid_input, "resamples must be >= 1");
  if (concurrency < 1) fail(ErrorKind::invalid_input, "concurrency must be >= 1");
  if (max_tokens < 1) fail(ErrorKind::invalid_input, "max_tokens must be positive");
  if (initial_backoff_ms < 0) fail(ErrorKind::invalid_input, "initial_backoff_ms must be >= 0");
}

void ConstructPrompt::validate() const {
  if (attribute_name.empty()) fail(ErrorKind::invalid_input, "construct attribute name is empty");
  if (definition_text.empty()) fail(ErrorKind::invalid_input, "construct definition is empty");
  if (!(tolerance > 0.0) || !std::isfinite(tolerance)) fail(ErrorKind::invalid_input, "construct tolerance must be positive");
}

std::string build_prompt(std::string_view text, const ConstructPrompt& construct, bool with_confidence) {
  construct.validate();
  if (text.empty()) fail(ErrorKind::invalid_input, "text to rate is empty");
  const std::string tol = format_number(construct.tolerance);

  std::string p;
  p += text;
  p += "\nYour task: for each attribute below, rate how strongly the provided content manifests it.\n\n";
  p += "BEGIN ATTRIBUTES\n";
  p += construct.attribute_name + ": " + construct.definition_text + "\n";
  if (with_confidence)
    p += "accuracy_estimate: What is the probability (0-100) that your prediction is within \xC2\xB1" + tol +
         " points of the true value?\n";
  p += "END ATTRIBUTES\n\n";
  p += "BEGIN RATING SCALE\n";
  p += "Use integers 0-100 (inclusive). low = absent, high = extreme, mid = moderate.\n";
  p += "Use the full range and every increment, do not round to 5s/10s.\n";
  p += "Extremes are rare, use near 0 only if truly absent and near 100 only if overwhelming.\n";
  p += "Use moderate intermediates (e.g., 19, 67, 32) to account for nuance where applicable.\n";
  p += "Aim for the rating that serves as the optimal center for a \xC2\xB1" + tol +
       " point tolerance interval, ensuring the highest probability of capturing the true intensity.\n";
  p += "END RATING SCALE\n\n";
  p += "Method (per attribute) pick one exact integer. Stick to provided scale. Double check before choosing "
       "extremes. Interpret gradations as absent\xE2\x86\x92" "faint\xE2\x86\x92moderate\xE2\x86\x92" "abundant"
       "\xE2\x86\x92" "extreme. Don't overlook subtlety, don't default to extremes. Consider full spectrum, including "
       "intermediate gradations. High accuracy/precision is critical, it needs deep, holistic analysis of content.\n\n";
  p += "Rules:\n";
  p += "- Judge each attribute independently and separately from each other\n";
  p += "- Absolutely no indirect inference from other attributes or cross attribute leakage\n";
  p += "- Only measure the direct signal of each attribute alone in the content, NOT what is implied by other "
       "attributes, CRUCIAL each attribute measured independently on its own direct, specifically relevant signal\n\n";
  p += "Output JSON only, in following format:\n{\n";
  p += "  \"" + construct.attribute_name + "\": rating" + (with_confidence ? ",\n" : "\n");
  if (with_confidence) p += "  \"accuracy_estimate\": rating\n";
  p += "}\n";
  return p;
}

std::optional<std::string> first_json_object(std::string_view text) {
  for (std::size_t start = text.find('{'); start != std::string_view::npos; start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false, escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (escaped) escaped = false;
        else if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) {
        auto candidate = std::string(text.substr(start, i - start + 1));
        if (json::accept(candidate)) return candidate;
        break;
      }
    }
  }
  return std::nullopt;
}

namespace {

[[noreturn]] void parse_failure(ErrorKind kind, const std::string& why, std::string_view body) {
  fail(kind, why + "; raw response: " + std::string(body));
}

double read_rating(const json& obj, const std::string& key, std::string_view body) {
  auto it = obj.find(key);
  if (it == obj.end()) parse_failure(ErrorKind::parse, "missing key '" + key + "'", body);
  double value = 0.0;
  if (it->is_number()) {
    value = it->get<double>();
  } else if (it->is_string()) {
    // Some models quote their numbers.
    const auto& s = it->get_ref<const std::string&>();
    char* end = nullptr;
    value = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) parse_failure(ErrorKind::parse, "key '" + key + "' is not numeric", body);
  } else {
    parse_failure(ErrorKind::parse, "key '" + key + "' is not numeric", body);
  }
  if (!std::isfinite(value) || value < 0.0 || value > 100.0)
    parse_failure(ErrorKind::range, "key '" + key + "' = " + format_number(value) + " outside [0, 100]", body);
  return value;
}

}  // namespace

ParsedResponse parse_response(std::string_view body, std::string_view attribute_name, bool with_confidence) {
  if (body.empty()) fail(ErrorKind::parse, "empty response body");
  const auto object = first_json_object(body);
  if (!object) parse_failure(ErrorKind::parse, "no JSON object found", body);
  const auto obj = json::parse(*object);
  ParsedResponse out;
  out.score = read_rating(obj, std::string(attribute_name), body);
  if (with_confidence) out.confidence = read_rating(obj, "accuracy_estimate", body) / 100.0;
  return out;
}

std::string chat_request_body(std::string_view prompt, const ElicitConfig& cfg) {
  json body = {
      {"model", cfg.model_name},
      {"messages", json::array({{{"role", "user"}, {"content", std::string(prompt)}}})},
      {"temperature", cfg.temperature},
      {"top_p", cfg.top_p},
      {"max_tokens", cfg.max_tokens},
  };
  return body.dump();
}

std::string message_content(std::string_view response_body) {
  json doc;
  try {
    doc = json::parse(response_body);
  } catch (const json::parse_error&) {
    parse_failure(ErrorKind::parse, "response is not JSON", response_body);
  }
  const auto* choices = doc.contains("choices") ? &doc["choices"] : nullptr;
  if (!choices || !choices->is_array() || choices->empty())
    parse_failure(ErrorKind::parse, "response has no choices", response_body);
  const auto& message = (*choices)[0].value("message", json::object());
  auto content = message.find("content");
  if (content == message.end() || !content->is_string())
    parse_failure(ErrorKind::parse, "response has no message content", response_body);
  return content->get<std::string>();
}

std::vector<TextItem> load_text_items(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::invalid_input, "cannot open '" + path.string() + "'");
  std::vector<TextItem> items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto obj = json::parse(line);
      TextItem item;
      item.id = obj.at("id").is_string() ? obj.at("id").get<std::string>() : obj.at("id").dump();
      item.text = obj.at("text").get<std::string>();
      item.y_true = obj.at("y_true").get<double>();
      if (!std::isfinite(item.y_true) || item.y_true < 0.0 || item.y_true > kScaleMax)
        fail(ErrorKind::range, "y_true outside [0, 100]");
      items.push_back(std::move(item));
    } catch (const json::exception& e) {
      fail(ErrorKind::parse, path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      fail(e.kind(), path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return items;
}

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) fail(ErrorKind::invalid_input, "endpoint_url needs a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/v1/chat/completions"};
  return {url.substr(0, slash), url.substr(slash)};
}

enum class Outcome { ok, transient, permanent, auth };

struct Attempt {
  Outcome outcome = Outcome::ok;
  ParsedResponse parsed;
  std::string reason;
};

Attempt request_once(httplib::Client& client, const Endpoint& endpoint, const std::string& body,
                     const ConstructPrompt& construct, const ElicitConfig& cfg) {
  Attempt attempt;
  auto res = client.Post(endpoint.path, body, "application/json");
  if (!res) {
    attempt.outcome = Outcome::transient;
    attempt.reason = "transport error: " + httplib::to_string(res.error());
    return attempt;
  }
  const int status = res->status;
  if (status == 401 || status == 403) {
    attempt.outcome = Outcome::auth;
    attempt.reason = "authentication rejected (HTTP " + std::to_string(status) + ")";
    return attempt;
  }
  if (status == 408 || status == 429 || status >= 500) {
    attempt.outcome = Outcome::transient;
    attempt.reason = "HTTP " + std::to_string(status);
    return attempt;
  }
  if (status < 200 || status >= 300) {
    attempt.outcome = Outcome::permanent;
    attempt.reason = "HTTP " + std::to_string(status);
    return attempt;
  }
  try {
    attempt.parsed = parse_response(message_content(res->body), construct.attribute_name, cfg.with_confidence);
  } catch (const Error& e) {
    // Instruction-following failures are sampled at temperature 1; a retry
    // usually yields a well-formed answer.
    attempt.outcome = Outcome::transient;
    attempt.reason = e.what();
  }
  return attempt;
}

}  // namespace

ElicitResult elicit_dataset(const std::vector<TextItem>& texts, const ConstructPrompt& construct,
                            const ElicitConfig& cfg, std::string dataset_name) {
  cfg.validate();
  construct.validate();
  const auto endpoint = split_url(cfg.endpoint_url);

  std::string api_key;
  if (!cfg.api_key_env_var.empty()) {
    const char* value = std::getenv(cfg.api_key_env_var.c_str());
    if (!value || !*value)
      fail(ErrorKind::auth, "environment variable " + cfg.api_key_env_var + " is not set");
    api_key = value;
  }

  struct Slot {
    std::optional<MeasurementRecord> record;
    std::optional<ElicitFailure> failure;
  };
  std::vector<Slot> slots(texts.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::atomic<int> retries{0};
  std::mutex log_mutex;
  std::vector<std::string> log;
  std::string auth_reason;

  auto note = [&](std::string line) {
    std::lock_guard lock(log_mutex);
    log.push_back(std::move(line));
  };

  auto worker = [&] {
    httplib::Client client(endpoint.origin);
    client.set_connection_timeout(std::chrono::seconds(cfg.timeout_seconds));
    client.set_read_timeout(std::chrono::seconds(cfg.timeout_seconds));
    if (!api_key.empty()) client.set_bearer_token_auth(api_key);

    for (std::size_t i = next++; i < texts.size() && !abort; i = next++) {
      const auto& item = texts[i];
      std::string body;
      try {
        body = chat_request_body(build_prompt(item.text, construct, cfg.with_confidence), cfg);
      } catch (const Error& e) {
        slots[i].failure = ElicitFailure{item.id, e.what()};
        continue;
      }
      std::vector<ParsedResponse> draws;
      std::string failure;
      for (int draw = 0; draw < cfg.resamples && failure.empty() && !abort; ++draw) {
        for (int attempt = 0;; ++attempt) {
          auto result = request_once(client, endpoint, body, construct, cfg);
          if (result.outcome == Outcome::ok) {
            draws.push_back(result.parsed);
            break;
          }
          if (result.outcome == Outcome::auth) {
            std::lock_guard lock(log_mutex);
            auth_reason = result.reason;
            abort = true;
            break;
          }
          if (result.outcome == Outcome::permanent || attempt >= cfg.retries) {
            failure = result.reason + " after " + std::to_string(attempt + 1) + " attempt(s)";
            break;
          }
          const auto delay = std::chrono::milliseconds(
              static_cast<long long>(cfg.initial_backoff_ms) * (1LL << std::min(attempt, 16)));
          ++retries;
          note("id " + item.id + " attempt " + std::to_string(attempt + 1) + " failed (" + result.reason +
               "); retrying in " + std::to_string(delay.count()) + " ms");
          std::this_thread::sleep_for(delay);
        }
      }
      if (abort) break;
      if (!failure.empty()) {
        slots[i].failure = ElicitFailure{item.id, failure};
        note("id " + item.id + " failed: " + failure);
        continue;
      }
      MeasurementRecord r;
      r.id = item.id;
      r.y_true = item.y_true;
      r.y_pred = draws.front().score;
      r.confidence = draws.front().confidence.value_or(0.0);
      if (cfg.resamples > 1) {
        r.samples.emplace();
        for (const auto& d : draws) r.samples->push_back(d.score);
      }
      slots[i].record = std::move(r);
    }
  };

  const int n_workers = std::max(1, std::min<int>(cfg.concurrency, static_cast<int>(texts.size())));
  std::vector<std::thread> pool;
  for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  if (abort) fail(ErrorKind::auth, auth_reason + "; batch aborted");

  ElicitResult out;
  std::vector<MeasurementRecord> records;
  for (auto& slot : slots) {
    if (slot.record) records.push_back(std::move(*slot.record));
    else if (slot.failure) out.failures.push_back(std::move(*slot.failure));
  }
  out.dataset = Dataset(std::move(dataset_name), std::move(records));
  out.retries = retries;
  out.log = std::move(log);
  return out;
}

}  // namespace tolcal
