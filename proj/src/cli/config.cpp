#include "lgdf/cli/config.hpp"

namespace lgdf::cli {

Block::Block(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
  if (j_.is_null()) j_ = nlohmann::json::object();
  if (!j_.is_object()) throw ConfigError((path_.empty() ? std::string("config") : path_) + ": expected an object");
}

Block Block::child(const std::string& key) {
  used_.insert(key);
  if (!j_.contains(key)) return Block(nlohmann::json::object(), field(key));
  return Block(j_.at(key), field(key));
}

const nlohmann::json& Block::raw(const std::string& key) {
  used_.insert(key);
  if (!j_.contains(key)) throw ConfigError(field(key) + ": required");
  return j_.at(key);
}

Eigen::VectorXd Block::vector(const std::string& key) {
  const auto v = require<std::vector<double>>(key);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd Block::matrix(const std::string& key) {
  const auto& v = raw(key);
  if (!v.is_array() || v.empty()) throw ConfigError(field(key) + ": expected a non-empty array of rows");
  const auto rows = convert<std::vector<std::vector<double>>>(v, field(key));
  const std::size_t cols = rows.front().size();
  if (cols == 0) throw ConfigError(field(key) + ": rows must be non-empty");
  Eigen::MatrixXd m(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cols) throw ConfigError(field(key) + ": rows have different lengths");
    for (std::size_t j = 0; j < cols; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return m;
}

void Block::finish() const {
  std::string unknown;
  for (const auto& [key, value] : j_.items()) {
    if (used_.count(key)) continue;
    unknown += (unknown.empty() ? "" : ", ") + field(key);
  }
  if (!unknown.empty()) throw ConfigError("unknown config key: " + unknown);
}

}  // namespace lgdf::cli
