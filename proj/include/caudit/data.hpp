#pragma once

#include <string>

namespace caudit {

// Writes the shipped default data files (actor rules, perturbation lexicon,
// ambiguity lexicons, few-shot example pool) into a directory. The repo's
// data/ directory is generated this way; user overrides point the CLI at
// edited copies.
void dump_default_data(const std::string& dir);

}  // namespace caudit
