#include <doctest.h>

#include <atomic>
#include <cstdlib>

#include "gaplab/builtin_data.hpp"
#include "gaplab/llm.hpp"
#include "support/mock_http.hpp"

using namespace gaplab;

namespace {

EnvironmentFile drupal_env() { return builtin_environment(default_cve_id()); }

LlmClientConfig fast_config(const std::string& endpoint) {
  LlmClientConfig cfg;
  cfg.endpoint = endpoint;
  cfg.backoff_ms = {0, 0, 0};  // keep the retry contract, skip the waiting
  cfg.timeout_s = 5;
  return cfg;
}

std::string cve_description() {
  return builtin_cve_catalog().find(default_cve_id())->description;
}

}  // namespace

TEST_CASE("build_prompt is deterministic and embeds the example verbatim") {
  EnvironmentFile env = drupal_env();
  PromptBundle a = build_prompt(env, cve_description(), 5);
  PromptBundle b = build_prompt(env, cve_description(), 5);
  CHECK(a.render() == b.render());
  CHECK(a.render().find(serialize_environment(env)) != std::string::npos);
  CHECK(a.instruction.find("5") != std::string::npos);
  CHECK(a.n_variants == 5);
  CHECK(prompt_hash_hex(a) == prompt_hash_hex(b));
  CHECK_THROWS_AS(build_prompt(env, "", 5), InvariantError);
}

TEST_CASE("prompt estimate stays under the endpoint limit for all 20 CVEs") {
  LlmClientConfig cfg;
  for (const auto& entry : builtin_cve_catalog().entries) {
    EnvironmentFile env = builtin_environment(entry.cve_id);
    PromptBundle bundle = build_prompt(env, entry.description, 5);
    CHECK(estimate_tokens(bundle.render()) < cfg.prompt_token_limit);
  }
}

TEST_CASE("extract_json_blocks: fenced first, then bare, document order") {
  std::string text =
      "Here you go:\n```json\n{\"a\": 1}\n```\nand also {\"b\": [2, 3]} "
      "inline, plus text.\n```\n[4, 5]\n```\ntrailing {\"c\": \"}\"}";
  auto blocks = extract_json_blocks(text);
  REQUIRE(blocks.size() == 4);
  CHECK(nlohmann::json::parse(blocks[0]) == nlohmann::json{{"a", 1}});
  CHECK(nlohmann::json::parse(blocks[1]) == nlohmann::json::parse("[4, 5]"));
  CHECK(nlohmann::json::parse(blocks[2]) == nlohmann::json{{"b", {2, 3}}});
  CHECK(nlohmann::json::parse(blocks[3]) == nlohmann::json{{"c", "}"}});

  CHECK(extract_json_blocks("no json here at all").empty());
  CHECK(extract_json_blocks("broken { \"a\": ").empty());
}

TEST_CASE("randomize_llm: rule-engine output passes through verbatim") {
  EnvironmentFile env = drupal_env();
  auto rule_variants = randomize_rule(env, {}, 2, 91);
  std::string content = "Two variants:\n";
  for (const auto& v : rule_variants)
    content += "```json\n" + serialize_environment(v) + "```\n";

  testsupport::MockServer server([&](httplib::Server& s) {
    s.Post("/v1/chat/completions",
           [content](const httplib::Request&, httplib::Response& res) {
             res.set_content(testsupport::chat_body(content),
                             "application/json");
           });
  });

  LlmGenerationResult result = randomize_llm(
      env, cve_description(), 2, fast_config(server.url("/v1/chat/completions")));
  CHECK(result.variants.size() == 2);
  CHECK(result.shortfall == 0);
  for (const auto& v : result.variants) {
    CHECK(v.provenance.kind == Provenance::Kind::Randomized);
    CHECK(v.provenance.engine == RandomizerEngine::Llm);
    CHECK(v.provenance.prompt_hash == result.prompt_hash);
    CHECK(v.parent_id == env.host.host_id);
    CHECK(validate(v, env, {}).valid);
  }
}

TEST_CASE("randomize_llm: prose with no JSON raises ExtractionError") {
  testsupport::MockServer server([](httplib::Server& s) {
    s.Post("/v1/chat/completions",
           [](const httplib::Request&, httplib::Response& res) {
             res.set_content(
                 testsupport::chat_body("I cannot produce JSON today."),
                 "application/json");
           });
  });
  CHECK_THROWS_AS(
      randomize_llm(drupal_env(), cve_description(), 2,
                    fast_config(server.url("/v1/chat/completions"))),
      ExtractionError);
}

TEST_CASE("randomize_llm: invalid variants are filtered with a shortfall") {
  EnvironmentFile env = drupal_env();
  auto rule_variants = randomize_rule(env, {}, 2, 17);
  // Break one variant: drop the vulnerable product from its exposing port.
  EnvironmentFile broken = rule_variants[0];
  for (auto& p : broken.host.ports)
    if (p.number == broken.host.vulnerability.exposing_port)
      p.product = "nginx";
  std::string content = "```json\n" + serialize_environment(broken) +
                        "```\n```json\n" +
                        serialize_environment(rule_variants[1]) + "```\n";

  testsupport::MockServer server([&](httplib::Server& s) {
    s.Post("/v1/chat/completions",
           [content](const httplib::Request&, httplib::Response& res) {
             res.set_content(testsupport::chat_body(content),
                             "application/json");
           });
  });

  LlmGenerationResult result = randomize_llm(
      env, cve_description(), 2, fast_config(server.url("/v1/chat/completions")));
  CHECK(result.variants.size() == 1);
  CHECK(result.shortfall == 1);
  REQUIRE(result.rejected.size() == 1);
  CHECK(result.rejected[0].find("vp-missing") != std::string::npos);
}

TEST_CASE("randomize_llm: bare host objects are wrapped and accepted") {
  EnvironmentFile env = drupal_env();
  EnvironmentFile variant = randomize_rule(env, {}, 1, 55)[0];
  json host_only = json::parse(serialize_environment(variant))["host"];
  std::string content = "Variant: " + host_only.dump();

  testsupport::MockServer server([&](httplib::Server& s) {
    s.Post("/v1/chat/completions",
           [content](const httplib::Request&, httplib::Response& res) {
             res.set_content(testsupport::chat_body(content),
                             "application/json");
           });
  });

  LlmGenerationResult result = randomize_llm(
      env, cve_description(), 1, fast_config(server.url("/v1/chat/completions")));
  CHECK(result.variants.size() == 1);
  CHECK(result.shortfall == 0);
}

TEST_CASE("transport failures raise EndpointError after the retry budget") {
  // Nothing listens on this port.
  LlmClientConfig cfg = fast_config("http://127.0.0.1:1/v1/chat/completions");
  cfg.timeout_s = 1;
  CHECK_THROWS_AS(randomize_llm(drupal_env(), cve_description(), 1, cfg),
                  EndpointError);
}

TEST_CASE("HTTP 5xx retries then succeeds within the schedule") {
  std::atomic<int> calls{0};
  testsupport::MockServer server([&](httplib::Server& s) {
    s.Post("/v1/chat/completions",
           [&calls](const httplib::Request&, httplib::Response& res) {
             int n = ++calls;
             if (n <= 2) {
               res.status = 500;
               res.set_content("overloaded", "text/plain");
               return;
             }
             res.set_content(testsupport::chat_body("{\"not\": \"host\"}"),
                             "application/json");
           });
  });
  LlmClientConfig cfg = fast_config(server.url("/v1/chat/completions"));
  LlmGenerationResult result =
      randomize_llm(drupal_env(), cve_description(), 1, cfg);
  CHECK(calls.load() == 3);  // two failures, one success, within max_retries=3
  CHECK(result.variants.empty());
  CHECK(result.shortfall == 1);
}

TEST_CASE("malformed completion payloads raise EndpointError") {
  testsupport::MockServer server([](httplib::Server& s) {
    s.Post("/v1/chat/completions",
           [](const httplib::Request&, httplib::Response& res) {
             res.set_content("{\"choices\": []}", "application/json");
           });
  });
  CHECK_THROWS_AS(
      randomize_llm(drupal_env(), cve_description(), 1,
                    fast_config(server.url("/v1/chat/completions"))),
      EndpointError);
}

TEST_CASE("API key is sent as a bearer token") {
  std::string seen_auth;
  testsupport::MockServer server([&](httplib::Server& s) {
    s.Post("/v1/chat/completions",
           [&seen_auth](const httplib::Request& req, httplib::Response& res) {
             seen_auth = req.get_header_value("Authorization");
             res.set_content(testsupport::chat_body("{}"), "application/json");
           });
  });
  LlmClientConfig cfg = fast_config(server.url("/v1/chat/completions"));
  cfg.api_key = "sk-test-123";
  try {
    randomize_llm(drupal_env(), cve_description(), 1, cfg);
  } catch (const Error&) {
    // Only the header matters here.
  }
  CHECK(seen_auth == "Bearer sk-test-123");
}

TEST_CASE("external embedder round trip with dimension checking") {
  testsupport::MockServer server([](httplib::Server& s) {
    s.Post("/embed", [](const httplib::Request& req, httplib::Response& res) {
      auto body = nlohmann::json::parse(req.body);
      nlohmann::json vectors = nlohmann::json::array();
      for (const auto& t : body["texts"]) {
        (void)t;
        vectors.push_back({1.0, 0.0, 0.0, 0.5});
      }
      res.set_content(nlohmann::json{{"vectors", vectors}}.dump(),
                      "application/json");
    });
  });

  EmbedderSpec spec;
  spec.kind = EmbedderSpec::Kind::External;
  spec.d = 4;
  spec.endpoint = server.url("/embed");
  LlmClientConfig transport = fast_config(spec.endpoint);

  auto vectors = embed_external({"alpha", "beta"}, spec, transport);
  REQUIRE(vectors.size() == 2);
  CHECK(vectors[0].values == std::vector<double>{1.0, 0.0, 0.0, 0.5});

  spec.d = 7;  // mismatch must be rejected
  CHECK_THROWS_AS(embed_external({"alpha"}, spec, transport), EndpointError);
}
