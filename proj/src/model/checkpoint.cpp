#include "tailflow/model/checkpoint.hpp"

#include <fstream>
#include <map>

#include "tailflow/error.hpp"

namespace tailflow::model {
namespace {

using nlohmann::json;

constexpr const char* kSchema = "tailflow-checkpoint";

template <class F>
auto schema_guard(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(Errc::schema_mismatch, std::string(what) + ": " + e.what());
  }
}

}  // namespace

json architecture_to_json(const Architecture& arch) {
  json j = {{"hidden", arch.hidden},
            {"bins", arch.bins},
            {"tail_bound", arch.tail_bound},
            {"seed", arch.seed},
            {"mtaf_trainable_dof", arch.mtaf_trainable_dof}};
  j["initial_dof"] = arch.initial_dof ? json(*arch.initial_dof) : json(nullptr);
  return j;
}

Architecture architecture_from_json(const json& j) {
  return schema_guard("architecture", [&] {
    Architecture a;
    a.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    a.bins = j.at("bins").get<std::size_t>();
    a.tail_bound = j.at("tail_bound").get<double>();
    a.seed = j.at("seed").get<std::uint64_t>();
    a.mtaf_trainable_dof = j.value("mtaf_trainable_dof", false);
    if (j.contains("initial_dof") && !j["initial_dof"].is_null()) a.initial_dof = j["initial_dof"].get<double>();
    return a;
  });
}

json checkpoint_to_json(const FlowModel& model) {
  const auto& c = model.config();
  json params = json::object();
  for (const auto& p : model.parameters()) {
    const auto& v = p.var.value();
    params[p.name] = {{"shape", v.shape()}, {"data", std::vector<double>(v.data().begin(), v.data().end())}};
  }
  json base = json::array();
  for (const auto& m : model.base().marginals()) {
    if (m.heavy()) {
      base.push_back({{"kind", "student_t"}, {"dof", m.nu()}, {"trainable", m.dof->trainable}});
    } else {
      base.push_back({{"kind", "normal"}});
    }
  }
  return {{"schema", kSchema},
          {"version", kCheckpointVersion},
          {"variant", to_string(c.variant)},
          {"transform", to_string(c.transform)},
          {"dim", c.dim},
          {"n_layers", c.n_layers},
          {"d_l", c.d_l},
          {"reorder", c.reorder},
          {"initial_dof", c.initial_dof},
          {"dof_trainable", c.dof_trainable},
          {"architecture", architecture_to_json(c.arch)},
          {"base", base},
          {"permutations", model.permutations()},
          {"parameters", params}};
}

FlowModel checkpoint_from_json(const json& doc) {
  return schema_guard("checkpoint", [&] {
    if (!doc.is_object() || doc.value("schema", std::string()) != kSchema) {
      throw Error(Errc::schema_mismatch, "checkpoint: not a tailflow checkpoint document");
    }
    const int version = doc.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw Error(Errc::schema_mismatch, "checkpoint: unsupported version " + std::to_string(version));
    }
    ModelConfig c;
    c.variant = parse_variant(doc.at("variant").get<std::string>());
    c.transform = parse_transform(doc.at("transform").get<std::string>());
    c.dim = doc.at("dim").get<std::size_t>();
    c.n_layers = doc.at("n_layers").get<std::size_t>();
    c.d_l = doc.at("d_l").get<std::size_t>();
    c.reorder = doc.at("reorder").get<std::vector<std::size_t>>();
    c.initial_dof = doc.at("initial_dof").get<std::vector<double>>();
    c.dof_trainable = doc.at("dof_trainable").get<bool>();
    c.arch = architecture_from_json(doc.at("architecture"));
    FlowModel model(c);
    model.set_permutations(doc.at("permutations").get<std::vector<std::vector<std::size_t>>>());

    const json& stored = doc.at("parameters");
    auto params = model.parameters();
    if (stored.size() != params.size()) {
      throw Error(Errc::schema_mismatch, "checkpoint: expected " + std::to_string(params.size()) + " parameters, found " +
                                             std::to_string(stored.size()));
    }
    for (auto& p : params) {
      if (!stored.contains(p.name)) throw Error(Errc::schema_mismatch, "checkpoint: missing parameter " + p.name);
      const json& entry = stored.at(p.name);
      const auto shape = entry.at("shape").get<ad::Shape>();
      if (shape != p.var.shape()) {
        throw Error(Errc::schema_mismatch, "checkpoint: " + p.name + " has shape " + ad::to_string(shape) + ", model expects " +
                                               ad::to_string(p.var.shape()));
      }
      p.var.leaf_value() = ad::Tensor(shape, entry.at("data").get<std::vector<double>>());
    }
    return model;
  });
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(Errc::parse_error, path.string() + ": " + e.what());
  }
}

void write_json(const json& doc, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot write " + tmp.string());
    out << doc.dump(1) << '\n';
    if (!out) throw Error(Errc::io_error, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const FlowModel& model, const std::filesystem::path& path) {
  write_json(checkpoint_to_json(model), path);
}

FlowModel load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_json(read_json(path)); }

}  // namespace tailflow::model
