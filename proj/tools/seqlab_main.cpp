#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "seqlab/commands.hpp"
#include "seqlab/runconfig.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  for (const std::string& arg : args) {
    if (arg == "--help" || arg == "-h") {
      std::cout << seqlab::help_text();
      return 0;
    }
  }
  if (args.empty()) {
    std::cerr << seqlab::help_text();
    return 2;
  }
  try {
    const seqlab::RunConfig config = seqlab::parse_cli(args);
    return seqlab::run_command(config, std::cout);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
