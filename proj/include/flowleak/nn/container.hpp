#pragma once

#include <string>

#include "flowleak/ad/paramset.hpp"
#include "json.hpp"

namespace flowleak::nn {

// Shared structured-text container plumbing: parameter arrays are stored as
// ordered [{name, shape, data}] entries so files round-trip in canonical
// ParamSet order. `what` names the document kind in error messages.

nlohmann::json params_to_json(const ad::ParamSet& ps);

// Validates names and shapes against `structure` (canonical order).
ad::ParamSet params_from_json(const nlohmann::json& arr, const ad::ParamSet& structure,
                              const std::string& context);

nlohmann::json read_json_doc(const std::string& path, const std::string& what);
void write_json_doc(const std::string& path, const nlohmann::json& doc,
                    const std::string& what);
void check_doc_version(const nlohmann::json& doc, const std::string& path,
                       const std::string& what);

}  // namespace flowleak::nn
