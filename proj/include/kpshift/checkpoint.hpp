#pragma once

#include <string>

#include "kpshift/head.hpp"
#include "kpshift/runconfig.hpp"
#include "kpshift/train.hpp"

namespace kpshift {

// Layout: manifest.txt with one "name<TAB>filename" line per tensor, one
// KPST file per tensor, and config.txt echoing the run configuration.
void save_kpsem_checkpoint(const std::string& dir, const KpsemParams& params,
                           const RunConfig& cfg);
// Ignores tensors beyond the shift-module set, so a model checkpoint loads
// too. cfg_out, when given, receives the echoed configuration.
KpsemParams load_kpsem_checkpoint(const std::string& dir, RunConfig* cfg_out = nullptr);

void save_model_checkpoint(const std::string& dir, const Model& m, const RunConfig& cfg);
Model load_model_checkpoint(const std::string& dir, RunConfig* cfg_out = nullptr);

}  // namespace kpshift
