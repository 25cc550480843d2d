#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "gaplab/common.hpp"
#include "gaplab/encoder.hpp"
#include "gaplab/envmodel.hpp"
#include "gaplab/randomizer.hpp"

namespace gaplab {

// ---------------------------------------------------------------------------
// Chat-completion client configuration. The API key comes from
// GAP_LLM_API_KEY; endpoint URL and model name live in the config.
// ---------------------------------------------------------------------------

struct LlmClientConfig {
  std::string endpoint;  // full URL, e.g. http://host:port/v1/chat/completions
  std::string model = "glm-4";
  double temperature = 0.7;
  std::string api_key;  // falls back to GAP_LLM_API_KEY
  int max_retries = 3;
  std::vector<int> backoff_ms = {1000, 2000, 4000};
  int prompt_token_limit = 8000;
  int timeout_s = 60;

  std::string resolved_api_key() const {
    if (!api_key.empty()) return api_key;
    const char* env = std::getenv("GAP_LLM_API_KEY");
    return env != nullptr ? env : "";
  }
};

// ---------------------------------------------------------------------------
// Prompt assembly: vulnerability description as background knowledge, the
// captured simulation as the worked example, and a generation instruction.
// ---------------------------------------------------------------------------

struct PromptBundle {
  std::string background;
  std::string example;
  std::string instruction;
  int n_variants = 0;

  std::string render() const {
    return "## Background\n" + background + "\n\n## Example environment\n" +
           example + "\n## Instruction\n" + instruction + "\n";
  }
};

// Rough budget estimate: one token per four characters, rounded up.
inline int estimate_tokens(const std::string& text) {
  return static_cast<int>((text.size() + 3) / 4);
}

inline PromptBundle build_prompt(const EnvironmentFile& env,
                                 const std::string& cve_description, int n) {
  if (cve_description.empty())
    throw InvariantError("cve description must be nonempty");
  PromptBundle bundle;
  bundle.background = cve_description;
  bundle.example = serialize_environment(env);
  bundle.n_variants = n;
  bundle.instruction =
      "Generate " + std::to_string(n) +
      " JSON variants of the example environment above. Each variant must "
      "conform to the same schema, keep the same cve_id and vulnerable "
      "product reachable on its exposing port with a version inside the "
      "vulnerable range, and change at least two of: exposing port, product "
      "version, operating system version, additional open ports, web "
      "fingerprints. Output each variant as a separate JSON code block.";
  return bundle;
}

inline std::string prompt_hash_hex(const PromptBundle& bundle) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(bundle.render())));
  return std::string(buf);
}

// ---------------------------------------------------------------------------
// JSON extraction: fenced code blocks first, then bare top-level JSON
// values, each in document order.
// ---------------------------------------------------------------------------

namespace detail {

// Scans one balanced JSON value starting at `pos` ('{' or '['); returns the
// end offset past the value, or npos when unbalanced.
inline std::size_t scan_json_value(const std::string& text, std::size_t pos) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = pos; i < text.size(); ++i) {
    char c = text[i];
    if (in_string) {
      if (escaped)
        escaped = false;
      else if (c == '\\')
        escaped = true;
      else if (c == '"')
        in_string = false;
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{' || c == '[') {
      ++depth;
    } else if (c == '}' || c == ']') {
      --depth;
      if (depth == 0) return i + 1;
      if (depth < 0) return std::string::npos;
    }
  }
  return std::string::npos;
}

}  // namespace detail

inline std::vector<std::string> extract_json_blocks(const std::string& text) {
  std::vector<std::string> blocks;
  std::vector<std::pair<std::size_t, std::size_t>> fenced_spans;

  std::size_t pos = 0;
  while ((pos = text.find("```", pos)) != std::string::npos) {
    std::size_t body = text.find('\n', pos + 3);
    if (body == std::string::npos) break;  // opening fence with no body
    ++body;
    std::size_t close = text.find("```", body);
    if (close == std::string::npos) break;
    std::string content = text.substr(body, close - body);
    fenced_spans.emplace_back(pos, close + 3);
    std::size_t start = content.find_first_of("{[");
    if (start != std::string::npos) {
      std::size_t end = detail::scan_json_value(content, start);
      if (end != std::string::npos)
        blocks.push_back(content.substr(start, end - start));
    }
    pos = close + 3;
  }

  auto inside_fence = [&fenced_spans](std::size_t i) {
    for (const auto& [a, b] : fenced_spans)
      if (i >= a && i < b) return true;
    return false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    if ((text[i] != '{' && text[i] != '[') || inside_fence(i)) continue;
    std::size_t end = detail::scan_json_value(text, i);
    if (end == std::string::npos) continue;
    std::string candidate = text.substr(i, end - i);
    if (nlohmann::json::accept(candidate)) {
      blocks.push_back(std::move(candidate));
      i = end - 1;
    }
  }
  return blocks;
}

// ---------------------------------------------------------------------------
// Transport
// ---------------------------------------------------------------------------

namespace detail {

struct SplitUrl {
  std::string base;  // scheme://host[:port]
  std::string path;  // leading '/'
};

inline SplitUrl split_url(const std::string& url) {
  std::size_t scheme = url.find("://");
  if (scheme == std::string::npos)
    throw EndpointError("endpoint URL must include a scheme: " + url);
  std::size_t slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace detail

// POSTs a JSON body with the contracted retry schedule; returns the response
// body. Throws EndpointError after the final attempt fails.
inline std::string post_json_with_retries(const LlmClientConfig& cfg,
                                          const std::string& url,
                                          const std::string& body) {
  detail::SplitUrl split = detail::split_url(url);
  std::string last_error;
  const int attempts = cfg.max_retries + 1;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      int idx = std::min<int>(attempt - 1,
                              static_cast<int>(cfg.backoff_ms.size()) - 1);
      int delay = cfg.backoff_ms.empty() ? 0 : cfg.backoff_ms[idx];
      if (delay > 0)
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    }
    httplib::Client client(split.base);
    client.set_connection_timeout(cfg.timeout_s, 0);
    client.set_read_timeout(cfg.timeout_s, 0);
    httplib::Headers headers;
    std::string key = cfg.resolved_api_key();
    if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);
    auto res = client.Post(split.path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    return res->body;
  }
  throw EndpointError("POST " + url + " failed after " +
                      std::to_string(attempts) + " attempts: " + last_error);
}

inline std::string chat_completion(const LlmClientConfig& cfg,
                                   const std::string& system_prompt,
                                   const std::string& user_prompt) {
  nlohmann::ordered_json body{
      {"model", cfg.model},
      {"messages",
       {{{"role", "system"}, {"content", system_prompt}},
        {{"role", "user"}, {"content", user_prompt}}}},
      {"temperature", cfg.temperature}};
  std::string raw = post_json_with_retries(cfg, cfg.endpoint, body.dump());
  nlohmann::json response;
  try {
    response = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception& e) {
    throw EndpointError(std::string("unparseable response body: ") + e.what());
  }
  if (!response.contains("choices") || !response["choices"].is_array() ||
      response["choices"].empty() ||
      !response["choices"][0].contains("message") ||
      !response["choices"][0]["message"].contains("content"))
    throw EndpointError("response lacks choices[0].message.content");
  return response["choices"][0]["message"]["content"].get<std::string>();
}

// ---------------------------------------------------------------------------
// LLM-powered randomization
// ---------------------------------------------------------------------------

struct LlmGenerationResult {
  std::vector<EnvironmentFile> variants;
  int shortfall = 0;  // requested minus valid
  std::vector<std::string> rejected;  // reason per discarded block
  std::string prompt_hash;
};

inline const char* kLlmSystemPrompt =
    "You are a security lab assistant that writes host-configuration "
    "variants as strict JSON conforming to the provided example schema.";

inline LlmGenerationResult randomize_llm(
    const EnvironmentFile& env, const std::string& cve_description, int n,
    const LlmClientConfig& client_cfg,
    const RandomizationPolicy& policy = {}) {
  PromptBundle bundle = build_prompt(env, cve_description, n);
  std::string rendered = bundle.render();
  if (estimate_tokens(rendered) > client_cfg.prompt_token_limit)
    throw EndpointError("prompt estimate exceeds the endpoint token limit");

  LlmGenerationResult result;
  result.prompt_hash = prompt_hash_hex(bundle);

  std::string content =
      chat_completion(client_cfg, kLlmSystemPrompt, rendered);
  std::vector<std::string> blocks = extract_json_blocks(content);
  if (blocks.empty())
    throw ExtractionError("no parseable JSON in the model response");

  // A block may hold one candidate or an array of them.
  std::vector<nlohmann::ordered_json> candidates;
  for (const auto& block : blocks) {
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(block);
    } catch (const nlohmann::json::exception&) {
      result.rejected.push_back("unparseable block");
      continue;
    }
    if (j.is_array())
      for (auto& item : j) candidates.push_back(std::move(item));
    else
      candidates.push_back(std::move(j));
  }

  int index = 0;
  for (auto& candidate : candidates) {
    if (static_cast<int>(result.variants.size()) >= n) break;
    nlohmann::ordered_json wrapped;
    if (candidate.is_object() && candidate.contains("schema_version")) {
      wrapped = std::move(candidate);
    } else if (candidate.is_object() && candidate.contains("host_id")) {
      wrapped = nlohmann::ordered_json{{"schema_version", "1"},
                                       {"host", std::move(candidate)}};
    } else {
      result.rejected.push_back("not an environment or host object");
      continue;
    }
    wrapped["provenance"] =
        nlohmann::ordered_json{{"kind", "randomized"},
                               {"engine", "llm"},
                               {"prompt_hash", result.prompt_hash}};
    wrapped["parent_id"] = env.host.host_id;

    EnvironmentFile variant;
    try {
      variant = parse_environment_lenient(wrapped.dump());
    } catch (const Error& e) {
      result.rejected.push_back(std::string("schema: ") + e.what());
      continue;
    }
    if (variant.host.host_id == env.host.host_id)
      variant.host.host_id += "-llm-" + std::to_string(index);
    ++index;
    ValidationReport report = validate(variant, env, policy);
    if (!report.valid) {
      std::string why = "invalid:";
      for (const auto& rule : report.violations) why += " " + rule;
      if (report.violations.empty()) why += " too-few-field-changes";
      result.rejected.push_back(why);
      continue;
    }
    result.variants.push_back(std::move(variant));
  }
  result.shortfall = n - static_cast<int>(result.variants.size());
  return result;
}

// ---------------------------------------------------------------------------
// External embedder over the same HTTP JSON mechanism:
// {"texts": [...]} -> {"vectors": [[...]]}, dimension-checked.
// ---------------------------------------------------------------------------

inline std::vector<StateVector> embed_external(
    const std::vector<std::string>& texts, const EmbedderSpec& spec,
    const LlmClientConfig& transport) {
  spec.validate();
  if (spec.kind != EmbedderSpec::Kind::External)
    throw InvariantError("embed_external requires an external embedder spec");
  nlohmann::ordered_json body{{"texts", texts}};
  std::string raw =
      post_json_with_retries(transport, spec.endpoint, body.dump());
  nlohmann::json response;
  try {
    response = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception& e) {
    throw EndpointError(std::string("unparseable embedder response: ") +
                        e.what());
  }
  if (!response.contains("vectors") || !response["vectors"].is_array() ||
      response["vectors"].size() != texts.size())
    throw EndpointError("embedder response lacks a matching vectors array");
  std::vector<StateVector> out;
  for (const auto& vec : response["vectors"]) {
    StateVector sv;
    sv.values = vec.get<std::vector<double>>();
    if (static_cast<int>(sv.values.size()) != spec.d)
      throw EndpointError("embedder returned dimension " +
                          std::to_string(sv.values.size()) + ", expected " +
                          std::to_string(spec.d));
    for (double v : sv.values)
      if (!std::isfinite(v))
        throw EndpointError("embedder returned a non-finite value");
    out.push_back(std::move(sv));
  }
  return out;
}

}  // namespace gaplab
