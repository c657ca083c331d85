#include "api_contract.hpp"

#include <httplib.h>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cctype>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "docs2synth/config.hpp"
#include "docs2synth/pipeline.hpp"
#include "docs2synth/review_server.hpp"
#include "docs2synth/review_service.hpp"
#include "docs2synth/text.hpp"
#include "test_support.hpp"

namespace docs2synth::testkit {

using nlohmann::json;

struct OpenApiContract::Impl {
  YAML::Node root;

  YAML::Node resolve(YAML::Node schema) const {
    while (schema.IsMap() && schema["$ref"]) {
      auto ref = schema["$ref"].as<std::string>();
      const std::string prefix = "#/";
      if (ref.rfind(prefix, 0) != 0) throw std::runtime_error("unsupported $ref " + ref);
      YAML::Node node;
      node.reset(root);
      std::size_t start = prefix.size();
      while (start <= ref.size()) {
        auto end = ref.find('/', start);
        auto part = ref.substr(start, end == std::string::npos ? std::string::npos : end - start);
        YAML::Node next = node[part];
        node.reset(next);
        if (!node) throw std::runtime_error("dangling $ref " + ref);
        if (end == std::string::npos) break;
        start = end + 1;
      }
      schema.reset(node);
    }
    return schema;
  }

  void check(const json& v, YAML::Node schema, const std::string& at, std::vector<std::string>& out) const {
    schema.reset(resolve(schema));
    if (!schema || !schema.IsMap()) return;
    if (auto t = schema["type"]) {
      auto type = t.as<std::string>();
      bool ok = (type == "object" && v.is_object()) || (type == "array" && v.is_array()) ||
                (type == "string" && v.is_string()) || (type == "boolean" && v.is_boolean()) ||
                (type == "integer" && v.is_number_integer()) || (type == "number" && v.is_number());
      if (!ok) {
        out.push_back(at + ": expected " + type + ", got " + v.type_name());
        return;
      }
    }
    if (auto e = schema["enum"]) {
      bool found = false;
      for (const auto& option : e) found = found || (v.is_string() && option.as<std::string>() == v.get<std::string>());
      if (!found) out.push_back(at + ": value " + v.dump() + " not in enum");
    }
    if (v.is_number()) {
      if (auto m = schema["minimum"]; m && v.get<double>() < m.as<double>()) out.push_back(at + ": below minimum");
      if (auto m = schema["maximum"]; m && v.get<double>() > m.as<double>()) out.push_back(at + ": above maximum");
    }
    if (v.is_object()) {
      if (auto req = schema["required"]) {
        for (const auto& r : req) {
          auto key = r.as<std::string>();
          if (!v.contains(key)) out.push_back(at + ": missing required '" + key + "'");
        }
      }
      auto props = schema["properties"];
      auto extra = schema["additionalProperties"];
      for (const auto& [key, child] : v.items()) {
        if (props && props[key]) {
          check(child, props[key], at + "." + key, out);
        } else if (extra && extra.IsMap()) {
          check(child, extra, at + "." + key, out);
        }
      }
    }
    if (v.is_array()) {
      if (auto items = schema["items"]) {
        for (std::size_t i = 0; i < v.size(); ++i) check(v[i], items, at + "[" + std::to_string(i) + "]", out);
      }
    }
  }
};

OpenApiContract::OpenApiContract(const std::string& path) : impl_(std::make_unique<Impl>()) {
  impl_->root = YAML::LoadFile(path);
}

OpenApiContract::~OpenApiContract() = default;

std::vector<std::string> OpenApiContract::check_response(const std::string& method, const std::string& path_template,
                                                         int status, const json& body) const {
  std::vector<std::string> out;
  std::string verb = method;
  std::transform(verb.begin(), verb.end(), verb.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  auto op = impl_->root["paths"][path_template][verb];
  if (!op) return {"undocumented operation " + method + " " + path_template};
  auto response = op["responses"][std::to_string(status)];
  if (!response) return {"undocumented status " + std::to_string(status) + " for " + method + " " + path_template};
  response.reset(impl_->resolve(response));
  auto schema = response["content"]["application/json"]["schema"];
  if (!schema) return out;
  impl_->check(body, schema, "$", out);
  return out;
}

namespace {

std::string expand(std::string path, const std::vector<std::string>& ids) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto key = "{qa" + std::to_string(i) + "}";
    for (auto at = path.find(key); at != std::string::npos; at = path.find(key)) path.replace(at, key.size(), ids[i]);
  }
  return path;
}

}  // namespace

std::vector<ReplayStep> replay_review_session(const std::string& config_path, const std::string& storage_root,
                                              const std::string& session_path, const OpenApiContract& contract) {
  auto cfg = config::load_config(config_path);
  cfg.storage_root = storage_root;
  pipeline::Pipeline pipe(cfg);
  review::ReviewService service(pipe);
  config::ReviewServerConfig server_cfg;
  server_cfg.host = "127.0.0.1";
  review::ReviewServer server(service, server_cfg);
  int port = server.bind_any_port();
  if (port <= 0) throw std::runtime_error("could not bind a port");
  std::thread listener([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  std::vector<ReplayStep> steps;
  std::vector<std::string> ids;
  try {
    std::istringstream lines(text::read_file(session_path));
    for (std::string line; std::getline(lines, line);) {
      if (text::trim(line).empty()) continue;
      auto step = json::parse(line);
      ReplayStep r;
      r.name = step.at("name").get<std::string>();
      r.expected_status = step.at("expect").get<int>();
      auto method = step.at("method").get<std::string>();
      auto path = expand(step.at("path").get<std::string>(), ids);
      auto body = step.contains("body") ? step["body"].dump() : std::string();

      auto before = snapshot_tree(storage_root);
      httplib::Result res = method == "GET"     ? client.Get(path)
                            : method == "POST"  ? client.Post(path, body, "application/json")
                            : method == "PATCH" ? client.Patch(path, body, "application/json")
                                                : client.Delete(path);
      if (!res) throw std::runtime_error("request failed: " + method + " " + path);
      r.status = res->status;
      r.state_unchanged = snapshot_tree(storage_root) == before;
      auto parsed = json::parse(res->body, nullptr, false);
      if (parsed.is_discarded()) {
        r.schema_problems.push_back("response is not JSON");
      } else {
        r.schema_problems = contract.check_response(method, step.at("template").get<std::string>(), r.status, parsed);
        if (ids.empty() && parsed.is_object() && parsed.contains("items")) {
          for (const auto& item : parsed["items"]) ids.push_back(item.at("qa_id").get<std::string>());
        }
      }
      steps.push_back(std::move(r));
    }
  } catch (...) {
    server.stop();
    listener.join();
    throw;
  }
  server.stop();
  listener.join();
  return steps;
}

}  // namespace docs2synth::testkit
