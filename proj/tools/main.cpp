#include <iostream>
#include <stdexcept>

#include "cli_common.hpp"
#include "focusrl/jsonl.hpp"
#include "focusrl/kernels.hpp"
#include "focusrl/provider.hpp"

int main(int argc, char** argv) {
  using namespace focusrl;
  CLI::App app{"Focus-GRPO scoring, simulation and data pipeline tools"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "focusrl 0.1.0");
  bool show_isa = false;
  app.add_flag("--show-isa", show_isa, "Print the active kernel ISA to stderr");

  cli::Runner run;
  cli::register_score(app, run);
  cli::register_gradcheck(app, run);
  cli::register_simulate(app, run);
  cli::register_report(app, run);
  cli::register_pipeline(app, run);
  cli::register_chart_id(app, run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? cli::kOk : cli::kValidation;
  }
  if (show_isa) std::cerr << "kernels: " << kernels::isa_name(kernels::active_isa()) << '\n';

  try {
    return run ? run() : cli::kValidation;
  } catch (const jsonl::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kIo;
  } catch (const ProviderError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kProvider;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kIo;
  }
}
