#include "slideseek/backend.hpp"

namespace slideseek {

using nlohmann::json;

std::vector<std::string> check_schema(const json& value, const DecisionSchema& schema) {
  std::vector<std::string> violations;
  if (!value.is_object()) {
    violations.push_back("decision is not a JSON object");
    return violations;
  }
  for (const auto& [field, type] : schema.required) {
    auto it = value.find(field);
    if (it == value.end()) {
      violations.push_back("missing field: " + field);
      continue;
    }
    bool ok = (type == "string" && it->is_string()) || (type == "boolean" && it->is_boolean()) ||
              (type == "number" && it->is_number()) ||
              (type == "integer" && it->is_number_integer()) ||
              (type == "array" && it->is_array()) || (type == "object" && it->is_object());
    if (!ok) violations.push_back("field " + field + " is not of type " + type);
  }
  return violations;
}

json decide_validated(DecisionBackend& backend, const std::string& prompt,
                      const DecisionSchema& schema, std::vector<PendingEvent>* log,
                      const std::string& actor, EventKind log_kind) {
  json decision = backend.decide(prompt);
  std::vector<std::string> violations = check_schema(decision, schema);
  if (violations.empty()) return decision;

  std::string repair = prompt + "\n\nYour previous response violated the output contract:";
  for (const std::string& v : violations) repair += "\n- " + v;
  repair += "\nRespond again with a single JSON object satisfying the contract.";
  if (log) {
    log->push_back({actor, log_kind,
                    json{{"repair_reprompt", true}, {"violations", violations}}});
  }
  decision = backend.decide(repair);
  violations = check_schema(decision, schema);
  if (!violations.empty()) {
    std::string msg = "decision invalid after repair:";
    for (const std::string& v : violations) msg += " " + v + ";";
    throw BackendError(msg);
  }
  return decision;
}

namespace {
constexpr const char* kContextOpen = "\n```context-json\n";
constexpr const char* kContextClose = "\n```\n";
}  // namespace

std::string embed_context_block(const std::string& prose, const json& context) {
  return prose + kContextOpen + context.dump() + kContextClose;
}

json extract_context_block(const std::string& prompt) {
  std::size_t open = prompt.rfind(kContextOpen);
  if (open == std::string::npos) throw BackendError("prompt carries no context block");
  std::size_t start = open + std::string(kContextOpen).size();
  std::size_t close = prompt.find(kContextClose, start);
  if (close == std::string::npos) throw BackendError("unterminated context block");
  try {
    return json::parse(prompt.substr(start, close - start));
  } catch (const json::exception& e) {
    throw BackendError(std::string("unparsable context block: ") + e.what());
  }
}

}  // namespace slideseek
