// porosim command line: replay, serve, validate.

#include <porosim/server.hpp>

#include <CLI11.hpp>

#include <csignal>
#include <iostream>

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted.store(true); }

int run_validate(const std::string& scene) {
  const porosim::Session session = porosim::Session::load(scene);
  std::cout << session.load_summary().dump(2) << "\n";
  return 0;
}

int run_replay(const std::string& scene, const std::string& script_path, const std::string& out,
               std::optional<double> duration, bool debug_contacts) {
  porosim::Session session = porosim::Session::load(scene);
  const auto script = porosim::ToolPathScript::load(script_path);
  const porosim::ReplayLog log = porosim::run_replay(session, script, {duration, debug_contacts});
  porosim::write_replay(log, session, out, debug_contacts);
  std::cout << "steps " << log.steps << ", peak force " << log.peak_force << " N, peak indentation "
            << log.peak_indentation << " m, mean step " << log.summary["mean_step_ms"].get<double>() << " ms\n"
            << "wrote " << out << "\n";
  return 0;
}

int run_serve(const std::string& scene, unsigned short port, double rate) {
  porosim::Session session = porosim::Session::load(scene);
  porosim::ServerOptions options;
  options.address = "0.0.0.0";
  options.port = port;
  options.snapshot_rate = rate;
  porosim::Server server(session, options);
  server.start();
  std::cout << "listening on port " << server.port() << std::endl;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_interrupted.load()) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    if (!server.failure().empty()) break;
  }
  server.stop();
  const std::string failure = server.failure();
  if (!failure.empty()) {
    std::cerr << "error: " << failure << "\n";
    return 3;
  }
  const auto& h = server.haptic_stats();
  std::cout << "steps " << server.steps() << ", snapshots " << server.broadcasts() << ", haptic ticks " << h.ticks
            << " (missed " << h.missed << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Porous soft-body simulation with haptic force rendering"};
  app.require_subcommand(1);

  std::string scene, script, out;
  double duration = -1.0;
  bool debug_contacts = false;
  auto* replay = app.add_subcommand("replay", "Run a tool script headlessly and write logs");
  replay->add_option("--scene", scene, "Scene JSON")->required();
  replay->add_option("--script", script, "Tool path JSON")->required();
  replay->add_option("--out", out, "Output directory")->required();
  replay->add_option("--duration", duration, "Seconds to simulate (default: script length)");
  replay->add_flag("--debug-contacts", debug_contacts, "Also write contacts.jsonl");

  int port = 8080;
  double rate = 60.0;
  auto* serve = app.add_subcommand("serve", "Run the live WebSocket endpoint");
  serve->add_option("--scene", scene, "Scene JSON")->required();
  serve->add_option("--port", port, "TCP port (0 picks one)")->check(CLI::Range(0, 65535));
  serve->add_option("--snapshot-rate", rate, "Snapshots per second")->check(CLI::PositiveNumber);

  auto* validate = app.add_subcommand("validate", "Load a scene and print its summary");
  validate->add_option("--scene", scene, "Scene JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*replay) {
      std::optional<double> d;
      if (duration >= 0.0) d = duration;
      return run_replay(scene, script, out, d, debug_contacts);
    }
    if (*serve) return run_serve(scene, static_cast<unsigned short>(port), rate);
    return run_validate(scene);
  } catch (const porosim::SolverError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const porosim::StabilityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const porosim::SingularMatrixError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const porosim::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
