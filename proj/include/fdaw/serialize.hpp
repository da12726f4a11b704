#pragma once

#include <string>
#include <variant>

#include <json.hpp>

#include "fdaw/fosr.hpp"
#include "fdaw/fpca.hpp"
#include "fdaw/mfpca.hpp"
#include "fdaw/simulate.hpp"
#include "fdaw/tvfpca.hpp"

namespace fdaw {

using Json = nlohmann::json;

inline constexpr const char* kFitFormat = "fdaw-fit";
inline constexpr int kFitFormatVersion = 1;

enum class ModelKind { fpca, mfpca, tvfpca, fosr };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

using AnyFit = std::variant<FpcaFit, MfpcaFit, TvFpcaFit, FosrFit>;

ModelKind kind_of(const AnyFit& fit);

// Vectors as arrays, matrices as arrays of rows; NaN <-> null.
Json to_json(const Eigen::VectorXd& v);
Json to_json(const Eigen::MatrixXd& m);
Eigen::VectorXd vector_from_json(const Json& j);
Eigen::MatrixXd matrix_from_json(const Json& j);

// Fit documents: {format, version, kind, ...}. Curves indexed by component
// (psi, beta) are stored one curve per row.
Json to_json(const FpcaFit& fit);
Json to_json(const MfpcaFit& fit);
Json to_json(const TvFpcaFit& fit);
Json to_json(const FosrFit& fit);
Json fit_to_json(const AnyFit& fit);
AnyFit fit_from_json(const Json& doc);

Json truth_to_json(const GroundTruth& truth);

// Compact, key-sorted, newline-terminated; byte-stable for equal input.
std::string dump_json(const Json& j);

void write_fit(const std::string& path, const AnyFit& fit);
AnyFit read_fit(const std::string& path);
void write_json(const std::string& path, const Json& j);

}  // namespace fdaw
