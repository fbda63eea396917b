#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "nnoodkit/cli/commands.hpp"

namespace {

using namespace nnoodkit;

std::optional<TaskId> task_option(const std::string& name) {
  if (name.empty()) return std::nullopt;
  return parse_task(name);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised synthetic anomaly toolkit"};
  app.require_subcommand(1);

  std::string dataset, task, plan, params, out, pred, gt;
  std::uint64_t seed = 0;
  std::size_t count = 1, n = 3, jobs = cli::default_jobs();

  auto* plan_cmd = app.add_subcommand("plan", "compute plan.json for a dataset");
  plan_cmd->add_option("--dataset", dataset, "dataset root")->required();
  plan_cmd->add_option("--out", out, "output plan.json")->required();

  auto* cal_cmd = app.add_subcommand("calibrate", "fit task parameters and write task_params.json");
  cal_cmd->add_option("--dataset", dataset, "dataset root")->required();
  cal_cmd->add_option("--task", task, "fpi|cutpaste|pii|nsa|nsa-mixed")->required();
  cal_cmd->add_option("--plan", plan, "plan.json")->required();
  cal_cmd->add_option("--seed", seed, "random seed");
  cal_cmd->add_option("--out", out, "output task_params.json")->required();

  auto* gen_cmd = app.add_subcommand("generate", "write an augmented dataset");
  gen_cmd->add_option("--dataset", dataset, "dataset root")->required();
  gen_cmd->add_option("--task", task, "check against the task stored in --params");
  gen_cmd->add_option("--plan", plan, "plan.json (informational)");
  gen_cmd->add_option("--params", params, "task_params.json")->required();
  gen_cmd->add_option("--count", count, "number of samples")->required();
  gen_cmd->add_option("--seed", seed, "base seed");
  gen_cmd->add_option("--out", out, "output directory")->required();
  gen_cmd->add_option("--jobs", jobs, "worker threads (default $NNOODKIT_JOBS or 1)");

  auto* eval_cmd = app.add_subcommand("evaluate", "pixel-wise AUROC and AP");
  eval_cmd->add_option("--pred", pred, "directory of score maps")->required();
  eval_cmd->add_option("--gt", gt, "directory of masks or bounding-box JSON")->required();
  eval_cmd->add_option("--out", out, "output metrics.json")->required();

  auto* insp_cmd = app.add_subcommand("inspect", "render original / augmented / label panels");
  insp_cmd->add_option("--dataset", dataset, "dataset root")->required();
  insp_cmd->add_option("--task", task, "check against the task stored in --params");
  insp_cmd->add_option("--plan", plan, "plan.json (informational)");
  insp_cmd->add_option("--params", params, "task_params.json")->required();
  insp_cmd->add_option("-n,--count", n, "number of panels");
  insp_cmd->add_option("--seed", seed, "base seed");
  insp_cmd->add_option("--out", out, "output directory")->required();
  insp_cmd->add_option("--jobs", jobs, "worker threads (default $NNOODKIT_JOBS or 1)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*plan_cmd) {
      cli::cmd_plan(dataset, out);
    } else if (*cal_cmd) {
      cli::cmd_calibrate(dataset, parse_task(task), plan, seed, out);
    } else if (*gen_cmd) {
      const auto report = cli::cmd_generate(dataset, params, count, seed, out, jobs, task_option(task));
      for (const auto& [k, msg] : report.failures) std::cerr << "sample " << k << ": " << msg << "\n";
      std::cout << report.written << "/" << report.requested << " samples written to " << out << "\n";
      if (!report.failures.empty()) return 1;
    } else if (*eval_cmd) {
      const auto r = cli::cmd_evaluate(pred, gt, out);
      std::cout << "auroc " << r.auroc << "  ap " << r.ap << "  prevalence " << r.prevalence << "\n";
    } else if (*insp_cmd) {
      cli::cmd_inspect(dataset, params, n, seed, out, jobs, task_option(task));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
