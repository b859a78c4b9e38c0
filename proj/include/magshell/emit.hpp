#ifndef MAGSHELL_EMIT_HPP
#define MAGSHELL_EMIT_HPP

#include <json.hpp>
#include <string>
#include <vector>

#include "magshell/dynamics.hpp"
#include "magshell/integrate.hpp"
#include "magshell/mane.hpp"
#include "magshell/rabinowitz.hpp"
#include "magshell/stability.hpp"

namespace magshell {

using Json = nlohmann::ordered_json;

/// Fixed shortest-roundtrip formatting; identical inputs give identical bytes.
std::string format_double(double v);

std::string to_csv(const std::vector<std::string>& header,
                   const std::vector<std::vector<double>>& rows);

Json to_json(const ClosedOrbitRecord& rec);
Json to_json(const ManeEstimate& est);
Json to_json(const ContactDiagnosis& d);
Json to_json(const StabilizingFormRecipe& r, const VerifyReport& rep);
Json to_json(const VirtualContactBound& b);
Json to_json(const DisplacementCertificate& c);
Json to_json(const LyapunovResult& r);
Json to_json(const InvariantReport& r);
Json to_json(const CriticalPointResult& r);

std::string trajectory_csv(const Trajectory& traj, const MagneticSystem& sys,
                           int stride = 1);

/// Writes payload to the path, or stdout when path is empty.
void write_output(const std::string& payload, const std::string& out_path);

}  // namespace magshell

#endif
