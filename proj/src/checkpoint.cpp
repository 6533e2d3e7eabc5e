#include "dbm/checkpoint.hpp"

#include <fstream>

#include "dbm/error.hpp"

namespace dbm {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "dbm-checkpoint";
constexpr int kVersion = 1;

json matrix_to_json(const Matrix& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows * cols)) {
    throw Error(ErrorKind::ParseError, "matrix entry count does not match its shape");
  }
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
  return m;
}

json vector_to_json(const Vector& v) { return json(std::vector<double>(v.begin(), v.end())); }

Vector vector_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

json model_to_json(const ModelParams& model) {
  json layers = json::array();
  for (const auto& l : model.layers) layers.push_back({{"weights", matrix_to_json(l.weights)}, {"biases", vector_to_json(l.biases)}});
  return {
      {"dims",
       {{"input", model.dims.input},
        {"hidden", model.dims.hidden},
        {"classes", model.dims.classes},
        {"head", to_string(model.dims.head)}}},
      {"layers", std::move(layers)},
      {"head_weights", matrix_to_json(model.head_weights)},
      {"head_biases", vector_to_json(model.head_biases)},
  };
}

ModelParams model_from_json(const json& j) {
  ModelParams model;
  try {
    const auto& dims = j.at("dims");
    model.dims.input = dims.at("input").get<int>();
    model.dims.hidden = dims.at("hidden").get<std::vector<int>>();
    model.dims.classes = dims.at("classes").get<int>();
    model.dims.head = parse_head_kind(dims.at("head").get<std::string>());
    for (const auto& l : j.at("layers")) {
      model.layers.push_back({matrix_from_json(l.at("weights")), vector_from_json(l.at("biases"))});
    }
    model.head_weights = matrix_from_json(j.at("head_weights"));
    model.head_biases = vector_from_json(j.at("head_biases"));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("malformed model: ") + e.what());
  }
  model.validate();
  return model;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const json j = {
      {"format", kFormat},
      {"version", kVersion},
      {"train_counts", ckpt.train_counts},
      {"config", ckpt.config},
      {"model", model_to_json(ckpt.model)},
  };
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << j.dump(1) << '\n';
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
  if (j.value("format", "") != kFormat) throw Error(ErrorKind::ParseError, path.string() + ": not a checkpoint");
  if (j.value("version", 0) != kVersion) throw Error(ErrorKind::ParseError, path.string() + ": unsupported version");
  Checkpoint ckpt;
  try {
    ckpt.train_counts = j.at("train_counts").get<std::vector<long>>();
    ckpt.config = j.at("config");
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
  ckpt.model = model_from_json(j.at("model"));
  if (static_cast<int>(ckpt.train_counts.size()) != ckpt.model.dims.classes) {
    throw Error(ErrorKind::ParseError, path.string() + ": train_counts length != classes");
  }
  return ckpt;
}

}  // namespace dbm
