#pragma once

#include <iosfwd>

#include "seqlab/runconfig.hpp"

namespace seqlab {

// The five CLI workflows. Each returns a process exit status (0 = completed
// with no contract violation) and reports to `out`; hard errors propagate as
// exceptions for the entry point to print.
int cmd_train(const RunConfig& config, std::ostream& out);
int cmd_eval(const RunConfig& config, std::ostream& out);
int cmd_decode(const RunConfig& config, std::ostream& out);
int cmd_bench(const RunConfig& config, std::ostream& out);
int cmd_gradcheck(const RunConfig& config, std::ostream& out);

int run_command(const RunConfig& config, std::ostream& out);

}  // namespace seqlab
