#pragma once

#include <map>
#include <string>
#include <vector>

#include "fdaw/serialize.hpp"

namespace fdaw {

struct ModelEntry {
  std::string id;
  std::string source;
  ModelKind kind;
  AnyFit fit;
};

// Immutable after loading; lookups are safe from concurrent handlers.
class ModelRegistry {
 public:
  // Throws when the id is already taken.
  void add(std::string id, AnyFit fit, std::string source = {});
  const ModelEntry* find(const std::string& id) const;
  const std::vector<ModelEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<ModelEntry> entries_;
};

// Each spec is "path" (id = file stem) or "id=path".
ModelRegistry load_registry(const std::vector<std::string>& specs);

struct ApiRequest {
  std::string method{"GET"};
  std::string path;  // decoded, e.g. /api/model/m1/scores
  std::map<std::string, std::string> query;
  std::string body;

  // Splits and decodes "path?query".
  static ApiRequest from_target(std::string method, const std::string& target, std::string body = {});
};

struct ApiResponse {
  int status{200};
  std::string body;  // JSON
};

// Pure function of (registry, request); errors are {error, detail} with
// 400 bad request, 404 not found, 405 wrong method, 409 wrong model kind.
ApiResponse handle(const ModelRegistry& registry, const ApiRequest& request);

struct ServeOptions {
  std::string host{"127.0.0.1"};
  int port{8080};
  std::string static_dir;  // optional built UI mounted at /
};

// Blocks until the server stops. Throws when the port cannot be bound.
void serve(const ModelRegistry& registry, const ServeOptions& opts);

}  // namespace fdaw
