#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rforge/dpo.hpp"
#include "rforge/env.hpp"
#include "rforge/ppo.hpp"
#include "rforge/shaping.hpp"

namespace rforge {

// Parsed from flat key=value text with dotted section names, e.g.
//
//   env.vocab_size = 16
//   run.algo = ppo
//   run.methods = identity,par,minmax
//   run.seeds = 1,2,3
//
// '#' starts a comment. Unknown keys and malformed values are reported with
// their line number.
struct ExperimentConfig {
    EnvSpec env;
    std::string algo = "ppo";  // ppo | grpo | dpo
    std::vector<std::string> methods = {"identity"};
    ShapingSpec shaping;  // shared shaping parameters; method is set per run
    PpoConfig ppo;
    DpoConfig dpo;
    std::vector<std::uint64_t> seeds = {1};
    std::string out_dir = "out";

    static ExperimentConfig from_string(const std::string& text, const std::string& origin);
    static ExperimentConfig from_file(const std::string& path);

    // ShapingSpec for one method name from the run list.
    ShapingSpec shaping_for(const std::string& method_name) const;

    void validate() const;  // throws std::invalid_argument
};

}  // namespace rforge
