#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "relchain/evaluate.hpp"
#include "relchain/gradcheck.hpp"
#include "relchain/sweep.hpp"

namespace py = pybind11;
using namespace relchain;

namespace {

KeyValues dict_to_kv(const py::dict& d) {
  KeyValues kv;
  for (auto item : d)
    kv.values[py::str(item.first).cast<std::string>()] =
        py::str(item.second).cast<std::string>();
  return kv;
}

py::dict instance_to_dict(const StoryInstance& inst) {
  py::list facts;
  for (const Fact& f : inst.facts)
    facts.append(py::make_tuple(f.src, std::string(relation_name(f.rel)), f.dst));
  py::dict d;
  d["facts"] = facts;
  d["query"] = py::make_tuple(inst.query.first, inst.query.second);
  d["target"] = std::string(relation_name(inst.target));
  d["k"] = inst.k;
  d["noise"] = noise_name(inst.noise);
  d["seed"] = inst.seed;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "relchain core: kinship knowledge base, story generation, models, training";
  m.attr("__version__") = "0.1.0";

  m.def("relations", [] {
    std::vector<std::string> out;
    for (Rel r : all_relations()) out.emplace_back(relation_name(r));
    return out;
  });

  m.def(
      "compose",
      [](const std::string& a, const std::string& b) -> std::optional<std::string> {
        auto ra = parse_relation(a), rb = parse_relation(b);
        if (!ra || !rb) throw py::value_error("unknown relation");
        auto out = KnowledgeBase::default_kb().compose(*ra, *rb);
        if (!out) return std::nullopt;
        return std::string(relation_name(*out));
      },
      py::arg("r1"), py::arg("r2"));

  m.def(
      "invert",
      [](const std::string& r) {
        auto rel = parse_relation(r);
        if (!rel) throw py::value_error("unknown relation");
        return std::string(relation_name(invert(*rel)));
      },
      py::arg("relation"));

  m.def(
      "resolve_chain",
      [](const std::vector<std::string>& chain) -> std::optional<std::string> {
        std::vector<Rel> rels;
        for (const std::string& name : chain) {
          auto rel = parse_relation(name);
          if (!rel) throw py::value_error("unknown relation `" + name + "`");
          rels.push_back(*rel);
        }
        auto out = KnowledgeBase::default_kb().resolve_chain(rels);
        if (!out) return std::nullopt;
        return std::string(relation_name(*out));
      },
      py::arg("chain"));

  m.def("validate_kb", [] {
    std::vector<std::string> out;
    for (const auto& issue : validate_kb(KnowledgeBase::default_kb()).issues)
      out.push_back(issue.detail);
    return out;
  });

  m.def(
      "generate_instance",
      [](int k, const std::string& noise, uint64_t seed) {
        auto regime = parse_noise(noise);
        if (!regime) throw py::value_error("unknown noise regime `" + noise + "`");
        return instance_to_dict(generate_instance(k, *regime, seed));
      },
      py::arg("k"), py::arg("noise") = "clean", py::arg("seed") = 0);

  m.def(
      "gen_dataset",
      [](const py::dict& config, const std::string& out_dir) {
        DataConfig dc = data_config_from(dict_to_kv(config));
        DatasetSplit split = generate_dataset(dc);
        save_dataset(split, dc, out_dir);
        py::dict out;
        out["train"] = split.train.size();
        out["valid"] = split.valid.size();
        out["test_ks"] = [&] {
          std::vector<int> ks;
          for (const auto& [k, v] : split.test) ks.push_back(k);
          return ks;
        }();
        return out;
      },
      py::arg("config"), py::arg("out_dir"));

  m.def(
      "train",
      [](const py::dict& config, const std::string& out_dir) {
        TrainConfig tc = train_config_from(dict_to_kv(config));
        TrainResult result = train(tc, out_dir);
        py::dict out;
        out["best_epoch"] = result.best_epoch;
        out["best_val_acc"] = result.best_val_acc;
        out["best_val_loss"] = result.best_val_loss;
        out["epochs"] = result.log.size();
        out["wall_seconds"] = result.wall_seconds;
        out["checkpoint"] = (std::filesystem::path(out_dir) / "checkpoint.bin").string();
        return out;
      },
      py::arg("config"), py::arg("out_dir"));

  m.def(
      "evaluate",
      [](const std::string& checkpoint, const std::string& data_dir) {
        EvalReport report = evaluate_checkpoint(checkpoint, data_dir);
        py::dict per_k;
        for (const auto& [k, acc] : report.per_k_accuracy) per_k[py::int_(k)] = acc;
        py::dict out;
        out["per_k"] = per_k;
        out["mean"] = report.mean_test_accuracy;
        out["fingerprint"] = report.config_fingerprint;
        return out;
      },
      py::arg("checkpoint"), py::arg("data_dir") = "");

  m.def(
      "gradcheck",
      [](int reps, uint64_t seed, bool models) {
        py::dict out;
        for (const auto& r : gradcheck_ops(reps, seed)) out[py::str(r.name)] = r.max_rel_err;
        if (models)
          for (const auto& r : gradcheck_models(seed)) out[py::str(r.name)] = r.max_rel_err;
        return out;
      },
      py::arg("reps") = 5, py::arg("seed") = 42, py::arg("models") = true);
}
