#include "matchfree/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "matchfree/errors.hpp"

namespace matchfree {

using nlohmann::json;

json tensors_to_json(std::span<const TensorRef> tensors) {
  json out = json::object();
  for (const auto& t : tensors) {
    out[t.name] = {{"shape", {t.rows, t.cols}},
                   {"data", std::vector<double>(t.data.begin(), t.data.end())}};
  }
  return out;
}

void tensors_from_json(const json& j, std::span<const TensorRef> dest) {
  if (!j.is_object()) throw ValidationError("checkpoint tensors must be a JSON object");
  for (const auto& t : dest) {
    auto it = j.find(t.name);
    if (it == j.end()) throw ValidationError("checkpoint is missing tensor '" + t.name + "'");
    const auto& data = it->at("data");
    if (!data.is_array() || data.size() != t.data.size()) {
      throw ShapeError("checkpoint tensor '" + t.name + "' has " + std::to_string(data.size()) +
                       " entries, expected " + std::to_string(t.data.size()));
    }
    for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = data[i].get<double>();
  }
}

json make_checkpoint(std::span<const TensorRef> tensors, json meta) {
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"meta", std::move(meta)},
          {"tensors", tensors_to_json(tensors)}};
}

const json& checkpoint_tensors(const json& doc) {
  if (!doc.is_object() || doc.value("format", "") != kCheckpointFormat) {
    throw ValidationError("not a matchfree checkpoint");
  }
  if (doc.value("version", 0) != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + doc.value("version", json()).dump());
  }
  return doc.at("tensors");
}

void write_json_file(const std::filesystem::path& path, const json& doc, int indent) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << doc.dump(indent) << '\n';
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

}  // namespace matchfree
