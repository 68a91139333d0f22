// Python bindings. Structured results cross the boundary as JSON text and
// are decoded by the pure-Python wrapper in cona/__init__.py.
#include <optional>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cona/backend.hpp"
#include "cona/clock.hpp"
#include "cona/digest.hpp"
#include "cona/error.hpp"
#include "cona/eval.hpp"
#include "cona/guidance.hpp"
#include "cona/pipeline.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace cona;

namespace {

using Overrides = std::vector<std::string>;

pipeline::RunConfig config_for(const std::optional<fs::path>& path, const Overrides& overrides) {
    return pipeline::load_config(path, overrides);
}

std::string run(const fs::path& material, const fs::path& audience, const fs::path& script, const fs::path& out_dir,
                const std::optional<fs::path>& config_path, const Overrides& overrides, std::size_t jobs) {
    const auto config = config_for(config_path, overrides);
    backend::ScriptedBackend backend(backend::load_script(script), config.backend.context_budget_tokens);
    LogicalClock clock;
    pipeline::RunOutcome outcome;
    {
        py::gil_scoped_release release;
        outcome = pipeline::cmd_run(config, {material, audience, out_dir, jobs, sha256_file(script)}, backend, clock);
    }
    nlohmann::ordered_json j;
    j["run_id"] = outcome.manifest.run_id;
    j["run_dir"] = outcome.run_dir.string();
    j["manifest"] = materials::to_json(outcome.manifest);
    return j.dump();
}

std::string kbtest(const fs::path& audience, const fs::path& script, const fs::path& out_dir,
                   const std::optional<fs::path>& config_path, const Overrides& overrides) {
    const auto config = config_for(config_path, overrides);
    backend::ScriptedBackend backend(backend::load_script(script), config.backend.context_budget_tokens);
    const auto outcome = pipeline::cmd_kbtest(config, audience, out_dir, backend);
    nlohmann::ordered_json j;
    j["run_id"] = outcome.run_id;
    j["block_rates"] = outcome.report.per_step_block_rate;
    j["summary"] = pipeline::format_block_rates(outcome.report);
    j["report_path"] = outcome.report_path.string();
    return j.dump();
}

std::string score(const fs::path& transcript, const fs::path& script, const fs::path& out_dir,
                  const std::optional<fs::path>& config_path, const Overrides& overrides) {
    const auto config = config_for(config_path, overrides);
    backend::ScriptedBackend judge(backend::load_script(script), config.backend.context_budget_tokens);
    const auto outcome = pipeline::cmd_score(config, transcript, out_dir, judge);
    nlohmann::ordered_json j;
    j["run_id"] = outcome.run_id;
    j["scores"] = nlohmann::ordered_json::array();
    for (const auto& s : outcome.scores) j["scores"].push_back(s.score);
    nlohmann::ordered_json dist;
    for (auto level : kAllLevels) {
        const auto it = outcome.distribution.counts.find(level);
        dist[std::string(to_string(level))] = it == outcome.distribution.counts.end() ? 0 : it->second;
    }
    j["distribution"] = dist;
    j["scores_path"] = outcome.scores_path.string();
    return j.dump();
}

std::string report(const fs::path& scores_dir, const std::optional<fs::path>& out_dir,
                   const std::optional<fs::path>& config_path, const Overrides& overrides) {
    const auto outcome = pipeline::cmd_report(config_for(config_path, overrides), scores_dir, out_dir);
    nlohmann::ordered_json j;
    j["files"] = outcome.files;
    j["text"] = outcome.text;
    j["table"] = outcome.table ? nlohmann::ordered_json(eval::to_json(*outcome.table)) : nlohmann::ordered_json(nullptr);
    return j.dump();
}

}  // namespace

PYBIND11_MODULE(_cona, m) {
    m.doc() = "Native core of the cona pipeline";

    auto& base = py::register_exception<Error>(m, "ConaError", PyExc_RuntimeError);
    py::register_exception<pipeline::PhaseError>(m, "PhaseError", base.ptr());

    m.def("load_config", [](const std::optional<fs::path>& path, const Overrides& overrides) {
        return pipeline::to_json(config_for(path, overrides)).dump();
    }, py::arg("path") = std::nullopt, py::arg("overrides") = Overrides{});
    m.def("config_digest", [](const std::optional<fs::path>& path, const Overrides& overrides) {
        return pipeline::config_digest(config_for(path, overrides));
    }, py::arg("path") = std::nullopt, py::arg("overrides") = Overrides{});

    m.def("run", &run, py::arg("material"), py::arg("audience"), py::arg("script"), py::arg("out_dir"),
          py::arg("config") = std::nullopt, py::arg("overrides") = Overrides{}, py::arg("jobs") = 1);
    m.def("kbtest", &kbtest, py::arg("audience"), py::arg("script"), py::arg("out_dir"),
          py::arg("config") = std::nullopt, py::arg("overrides") = Overrides{});
    m.def("score", &score, py::arg("transcript"), py::arg("script"), py::arg("out_dir"),
          py::arg("config") = std::nullopt, py::arg("overrides") = Overrides{});
    m.def("report", &report, py::arg("scores_dir"), py::arg("out_dir") = std::nullopt,
          py::arg("config") = std::nullopt, py::arg("overrides") = Overrides{});

    m.def("trimmed_mean", [](const std::vector<double>& values) {
        const auto s = eval::trimmed_mean(values);
        return py::make_tuple(s.mean, s.std, s.n_effective);
    });
    m.def("format_cell", [](double mean, double std) { return eval::format_cell({mean, std, 0}); });
    m.def("score_labels", [](const std::vector<std::string>& labels) {
        eval::LabelSet set;
        for (const auto& l : labels) set.insert(dikw_from_string(l));
        return eval::score_qa(set);
    });
    m.def("estimate_tokens", [](const std::vector<std::pair<std::string, std::string>>& messages) {
        std::vector<backend::ChatMessage> msgs;
        for (const auto& [role, content] : messages) msgs.push_back({backend::role_from_string(role), content});
        return backend::estimate_tokens(msgs);
    });
    m.def("level_schedule", [](std::size_t budget) {
        const auto s = guidance::level_schedule(budget);
        return std::vector<std::size_t>(s.begin(), s.end());
    });
}
