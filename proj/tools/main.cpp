#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "rashomon/bench/pipeline.hpp"
#include "rashomon/common/error.hpp"

using namespace rashomon;

int main(int argc, char** argv) {
  CLI::App app{"Synthetic cell-cycle benchmark: data, VAE, heads, symbolic regression, attacks, report"};
  app.require_subcommand(1);

  std::string config_path, out = "run";
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  app.add_option("--config", config_path, "Run configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Master seed (overrides the config)");
  app.add_option("--out", out, "Run directory")->capture_default_str();
  app.add_option("--jobs", jobs, "Worker threads (overrides the config)")->check(CLI::PositiveNumber);

  bench::StageOptions opt;
  std::string mode = "hinge", space = "latent", restrict_dims;

  auto* gen = app.add_subcommand("gen-data", "Render the synthetic image set");
  auto* vae = app.add_subcommand("train-vae", "Train the TC-VAE encoder and write latent means");
  auto* head = app.add_subcommand("train-head", "Train classifier heads for one scheme");
  head->add_option("--scheme", opt.scheme, "1 (pixels, dense), 2 (latents, dense) or 3 (latents, sparse)")
      ->required()
      ->check(CLI::Range(1, 3));
  auto* sr = app.add_subcommand("symreg", "Fit symbolic heads on the Scheme-3 inputs");
  sr->add_option("--mode", mode, "hinge or mse")->check(CLI::IsMember({"hinge", "mse"}))->capture_default_str();
  auto* atk = app.add_subcommand("attack", "FGSM robustness curves");
  atk->add_option("--space", space, "latent or image")->check(CLI::IsMember({"latent", "image"}))->capture_default_str();
  auto* restrict_opt =
      atk->add_option("--restrict", restrict_dims, "Perturb only these latent dims (e.g. 0,4) or 'unselected'");
  auto* analyze = app.add_subcommand("analyze", "Expression sizes, sparse-network streams, cuts and response maps");
  auto* report = app.add_subcommand("report", "Summary table and text report");
  auto* all = app.add_subcommand("all", "Run every stage in order");

  CLI11_PARSE(app, argc, argv);

  try {
    bench::RunConfig cfg = config_path.empty() ? bench::RunConfig{} : bench::RunConfig::load(config_path);
    if (seed) cfg.seed = *seed;
    if (jobs) cfg.jobs = *jobs;

    if (all->parsed()) {
      bench::run_all(cfg, out, &std::cerr);
      return 0;
    }
    bench::Stage stage = bench::Stage::GenData;
    if (gen->parsed()) stage = bench::Stage::GenData;
    if (vae->parsed()) stage = bench::Stage::TrainVae;
    if (head->parsed()) stage = bench::Stage::TrainHead;
    if (sr->parsed()) {
      stage = bench::Stage::Symreg;
      opt.mode = symreg::parse_loss_mode(mode);
    }
    if (atk->parsed()) {
      stage = bench::Stage::Attack;
      opt.space = adv::parse_space(space);
      if (restrict_opt->count() > 0) opt.restrict_dims = restrict_dims;
    }
    if (analyze->parsed()) stage = bench::Stage::Analyze;
    if (report->parsed()) stage = bench::Stage::Report;
    bench::run_stage(stage, cfg, out, opt, &std::cerr);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DependencyError& e) {
    std::cerr << "missing dependency: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
