#include "flowleak/nn/container.hpp"

#include <fstream>

#include "flowleak/common/error.hpp"

namespace flowleak::nn {

using ad::ParamSet;
using ad::Tensor;
using json = nlohmann::json;

json params_to_json(const ParamSet& ps) {
  json arr = json::array();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& [name, t] = ps.entry(i);
    json e;
    e["name"] = name;
    e["shape"] = t.shape();
    e["data"] = std::vector<double>(t.data().begin(), t.data().end());
    arr.push_back(std::move(e));
  }
  return arr;
}

ParamSet params_from_json(const json& arr, const ParamSet& structure,
                          const std::string& context) {
  if (!arr.is_array() || arr.size() != structure.size())
    throw ParseError(context + ": params array does not match the spec (" +
                     std::to_string(arr.is_array() ? arr.size() : 0) + " entries, expected " +
                     std::to_string(structure.size()) + ")");
  ParamSet out;
  for (std::size_t i = 0; i < structure.size(); ++i) {
    const auto& [name, proto] = structure.entry(i);
    const json& e = arr[i];
    if (e.value("name", std::string()) != name)
      throw ParseError(context + ": entry " + std::to_string(i) + " is '" +
                       e.value("name", std::string()) + "', expected '" + name + "'");
    std::vector<int> shape = e.at("shape").get<std::vector<int>>();
    if (shape != proto.shape())
      throw ParseError(context + ": shape mismatch for '" + name + "'");
    std::vector<double> data = e.at("data").get<std::vector<double>>();
    out.add(name, Tensor::from_data(shape, std::move(data)));
  }
  return out;
}

void write_json_doc(const std::string& path, const json& doc, const std::string& what) {
  std::ofstream out(path);
  if (!out) throw IoError(what + ": cannot write " + path);
  out << doc.dump(1) << "\n";
  if (!out) throw IoError(what + ": write failed for " + path);
}

json read_json_doc(const std::string& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw IoError(what + ": cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(what + " " + path + ": " + e.what());
  }
}

void check_doc_version(const json& doc, const std::string& path, const std::string& what) {
  if (doc.value("version", 0) != 1)
    throw ParseError(what + " " + path + ": unsupported version");
}

}  // namespace flowleak::nn
