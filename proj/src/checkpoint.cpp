#include "caps/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "caps/rng.hpp"

namespace caps::codec {

using nlohmann::json;

namespace {

json config_to_json(const CodecConfig& c) {
  return json{{"feature_count", c.feature_count},
              {"d", c.d},
              {"heads", c.heads},
              {"inducing", c.inducing},
              {"max_len", c.resolved_max_len()},
              {"rff_hidden", c.resolved_rff_hidden()},
              {"lr", c.lr},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"pad_id", c.pad_id()}};
}

CodecConfig config_from_json(const json& j) {
  CodecConfig c;
  c.feature_count = j.at("feature_count").get<int>();
  c.d = j.at("d").get<int>();
  c.heads = j.at("heads").get<int>();
  c.inducing = j.at("inducing").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.rff_hidden = j.at("rff_hidden").get<int>();
  c.lr = j.at("lr").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.epochs = j.at("epochs").get<int>();
  const int pad = j.at("pad_id").get<int>();
  if (pad != c.pad_id()) {
    throw IoError("checkpoint: pad_id " + std::to_string(pad) + " does not equal feature_count " +
                  std::to_string(c.feature_count));
  }
  c.validate();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const CodecParams& params) {
  json out;
  out["format_version"] = kCheckpointFormatVersion;
  out["rng_algorithm"] = SeededRng::kAlgorithm;
  out["config"] = config_to_json(params.config);
  json jp = json::object();
  for_each_param(params, [&jp](const std::string& name, const Matrix& m) {
    json entry;
    entry["shape"] = {m.rows(), m.cols()};
    std::vector<double> data(m.data(), m.data() + m.size());  // row-major
    entry["data"] = std::move(data);
    jp[name] = std::move(entry);
  });
  out["params"] = std::move(jp);

  std::ofstream f(path);
  if (!f) throw IoError("checkpoint: cannot write '" + path + "'");
  f << out.dump();
  f << '\n';
  if (!f) throw IoError("checkpoint: write to '" + path + "' failed");
}

CodecParams load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("checkpoint: cannot open '" + path + "'");
  json in;
  try {
    f >> in;
  } catch (const json::exception& e) {
    throw IoError("checkpoint: '" + path + "' is not valid JSON: " + e.what());
  }
  try {
    if (in.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw IoError("checkpoint: unsupported format_version in '" + path + "'");
    }
    CodecParams params = allocate_codec(config_from_json(in.at("config")));
    const json& jp = in.at("params");
    std::size_t filled = 0;
    for_each_param(params, [&](const std::string& name, Matrix& m) {
      if (!jp.contains(name)) throw IoError("checkpoint: missing parameter '" + name + "'");
      const json& entry = jp.at(name);
      const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
      if (shape.size() != 2 || shape[0] != m.rows() || shape[1] != m.cols()) {
        throw IoError("checkpoint: parameter '" + name + "' has shape " +
                      (shape.size() == 2 ? shape_str(shape[0], shape[1]) : "?") + ", expected " +
                      shape_str(m));
      }
      const auto data = entry.at("data").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(data.size()) != m.size()) {
        throw IoError("checkpoint: parameter '" + name + "' has " + std::to_string(data.size()) +
                      " values, expected " + std::to_string(m.size()));
      }
      std::copy(data.begin(), data.end(), m.data());
      ++filled;
    });
    if (jp.size() != filled) {
      throw IoError("checkpoint: '" + path + "' carries " + std::to_string(jp.size()) +
                    " parameters, expected " + std::to_string(filled));
    }
    return params;
  } catch (const json::exception& e) {
    throw IoError("checkpoint: malformed '" + path + "': " + e.what());
  }
}

}  // namespace caps::codec
