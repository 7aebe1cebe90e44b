#pragma once

#include <memory>
#include <string>

#include "picket/picketnet.hpp"
#include "picket/victim.hpp"

namespace picket {

/// Binary container: magic "PCKT", format version, a JSON header describing
/// the payload, then the raw little-endian doubles of every named parameter
/// in header order. Optimizer state is not persisted; a loaded model resumes
/// with fresh Adam moments.

void save_picketnet(const PicketNet& net, const std::string& path);
std::shared_ptr<PicketNet> load_picketnet(const std::string& path);

void save_downstream(const DownstreamModel& model, const std::string& path);
DownstreamModel load_downstream(const std::string& path);

void save_bundle(const GuardBundle& bundle, const std::string& path);
GuardBundle load_bundle(const std::string& path);

}  // namespace picket
