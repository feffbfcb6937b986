// Python bindings. Structured values cross the boundary as JSON text and are
// converted with Python's json module, so the C++ JSON encoders stay the
// single source of truth for field names.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "convplan/core.hpp"
#include "convplan/forge.hpp"
#include "convplan/ged.hpp"
#include "convplan/pipeline.hpp"
#include "convplan/plan.hpp"
#include "convplan/preference.hpp"
#include "convplan/semantic.hpp"

namespace py = pybind11;
using namespace convplan;

namespace {

json to_cpp(const py::object& obj) {
  const auto dumps = py::module_::import("json").attr("dumps");
  return json::parse(dumps(obj).cast<std::string>());
}

py::object to_py(const json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

Plan plan_arg(const py::object& obj) {
  if (py::isinstance<py::str>(obj)) return parse_plan(obj.cast<std::string>());
  return parse_plan(to_cpp(obj).dump());
}

std::vector<PreferenceRecord> records_arg(const py::iterable& rows) {
  std::vector<PreferenceRecord> out;
  for (const auto& r : rows) out.push_back(preference_record_from_json(to_cpp(py::reinterpret_borrow<py::object>(r))));
  return out;
}

json ged_json(const GedResult& r) {
  return {{"cost", r.cost}, {"exact", r.exact}, {"expansions", r.expansions},
          {"budget_exhausted", r.budget_exhausted}};
}

}  // namespace

PYBIND11_MODULE(_convplan, m) {
  m.doc() = "Conversation rewriting and plan evaluation harness";

  // Messages carry the error code name as a prefix, e.g. "CacheMiss: ...".
  py::register_exception<Error>(m, "ConvplanError");

  m.def("classify_length", [](std::size_t turns) { return std::string(to_string(classify_length(turns))); },
        py::arg("turns"));

  m.def("split_counts",
        [](std::size_t n, std::array<double, 3> r) { return split_counts(n, {r[0], r[1], r[2]}); },
        py::arg("n"), py::arg("ratios") = std::array<double, 3>{0.6, 0.1, 0.3});

  m.def(
      "split_dataset",
      [](const std::vector<std::string>& ids, std::array<double, 3> r, std::uint64_t seed) {
        std::map<std::string, std::string> out;
        for (const auto& [id, s] : split_dataset(ids, {r[0], r[1], r[2]}, seed)) {
          out[id] = std::string(to_string(s));
        }
        return out;
      },
      py::arg("ids"), py::arg("ratios") = std::array<double, 3>{0.6, 0.1, 0.3}, py::arg("seed") = 0);

  m.def("parse_plan", [](const std::string& raw) { return to_py(to_json(parse_plan(raw))); },
        py::arg("raw"), "Parse planner output; returns the plan row including validity.");

  m.def(
      "validate_dag",
      [](const py::object& plan) {
        std::vector<std::string> out;
        for (const auto& v : validate_dag(plan_arg(plan)).violations) out.emplace_back(to_string(v.kind));
        return out;
      },
      py::arg("plan"));

  m.def(
      "ged",
      [](const py::object& a, const py::object& b, bool label_aware, std::size_t exact_threshold,
         std::size_t budget) {
        const auto costs = label_aware ? GedCostModel::label_aware() : GedCostModel{};
        return to_py(ged_json(ged(plan_arg(a), plan_arg(b), costs, exact_threshold, budget)));
      },
      py::arg("a"), py::arg("b"), py::arg("label_aware") = false,
      py::arg("exact_threshold") = kDefaultExactThreshold, py::arg("budget") = kDefaultGedBudget);

  m.def(
      "bertscore",
      [](const std::string& candidate, const std::string& reference, const py::object& embedding) {
        const auto provider = make_embedding_provider(
            embedding.is_none() ? json{{"kind", "synthetic"}} : to_cpp(embedding));
        const auto s = bertscore(candidate, reference, *provider);
        return to_py({{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}});
      },
      py::arg("candidate"), py::arg("reference"), py::arg("embedding") = py::none());

  m.def(
      "redact_text",
      [](const std::string& text) {
        auto r = redact_text(text);
        return py::make_tuple(r.text, r.count);
      },
      py::arg("text"));

  m.def(
      "make_presentation",
      [](const std::string& cid, const std::string& x, const std::string& y, std::uint64_t seed) {
        const auto p = make_presentation(cid, x, y, seed);
        return to_py({{"conversation_id", p.conversation_id},
                      {"slot_a", p.slot_a},
                      {"slot_b", p.slot_b},
                      {"shuffle_seed", p.shuffle_seed}});
      },
      py::arg("conversation_id"), py::arg("x"), py::arg("y"), py::arg("seed"));

  m.def(
      "make_record",
      [](const py::object& presentation, const std::string& verdict, const std::string& judge) {
        const auto j = to_cpp(presentation);
        Presentation p{j.at("conversation_id"), j.at("slot_a"), j.at("slot_b"),
                       j.at("shuffle_seed").get<std::uint64_t>()};
        return to_py(to_json(make_record(p, parse_verdict_name(verdict), judge)));
      },
      py::arg("presentation"), py::arg("verdict"), py::arg("judge") = "model:python");

  m.def(
      "aggregate_wtl",
      [](const py::iterable& records, const std::string& group_by, const py::object& conversations) {
        std::map<std::string, Conversation> convs;
        if (!conversations.is_none()) {
          for (const auto& c : to_cpp(conversations)) {
            auto conv = conversation_from_json(c);
            convs[conv.id] = conv;
          }
        }
        const auto t = aggregate_wtl(records_arg(records), parse_group_by(group_by), convs);
        json rows = json::array();
        for (const auto& r : t.rows) {
          rows.push_back({{"group", r.group}, {"rewriter", r.rewriter}, {"wins", r.wins},
                          {"ties", r.ties}, {"losses", r.losses}, {"comparisons", r.comparisons},
                          {"win_pct", r.win_pct}, {"tie_pct", r.tie_pct}, {"loss_pct", r.loss_pct}});
        }
        return to_py(rows);
      },
      py::arg("records"), py::arg("group_by") = "total", py::arg("conversations") = py::none());

  m.def("rank_rewriters",
        [](const py::iterable& records) { return to_py(to_json(rank_rewriters(records_arg(records)))); },
        py::arg("records"));

  m.def("competition_ranks", &competition_ranks, py::arg("scores"));

  m.def("config_hash", [](const py::object& config) { return config_hash(to_cpp(config)); },
        py::arg("config"));

  m.def("stage_names", &stage_names);

  m.def(
      "run_stage",
      [](const std::string& command, const std::filesystem::path& config,
         const std::optional<std::filesystem::path>& run_dir) {
        const auto cfg = load_run_config(config, run_dir);
        StageOutcome o;
        {
          py::gil_scoped_release release;
          o = run_stage(command, cfg);
        }
        return to_py({{"command", o.command}, {"cached", o.cached}, {"outputs", o.outputs}});
      },
      py::arg("command"), py::arg("config"), py::arg("run_dir") = py::none());

  m.def(
      "run_all",
      [](const std::filesystem::path& config, const std::optional<std::filesystem::path>& run_dir) {
        const auto cfg = load_run_config(config, run_dir);
        std::vector<StageOutcome> outcomes;
        {
          py::gil_scoped_release release;
          outcomes = run_all(cfg);
        }
        json out = json::array();
        for (const auto& o : outcomes) {
          out.push_back({{"command", o.command}, {"cached", o.cached}, {"outputs", o.outputs}});
        }
        return to_py(out);
      },
      py::arg("config"), py::arg("run_dir") = py::none());
}
