#include "emfi/glitch.hpp"

namespace emfi::glitch {

// Output of calibration::fit(calibration::defaultTarget()), lanes 0..31.
// Regenerate with `emfi calibrate data/voltage_target.txt`.
CaptureModel CaptureModel::calibrated() {
  CaptureModel m;
  m.data.thresholds = {
    91.980000000, 91.632867714, 92.062332155, 90.154555839,
    91.452403954, 90.928364053, 91.312965580, 91.374229879,
    90.961251386, 88.020337769, 88.817382997, 90.626003579,
    90.087559021, 90.370387040, 89.537306731, 91.070357819,
    89.858828081, 90.020000000, 90.016381491, 89.049663576,
    89.284394844, 89.525548218, 88.906404393, 88.497708155,
    88.020000000, 88.858867888, 87.980000000, 87.803405201,
    90.713715499, 87.374454103, 87.071144404, 86.501027543};
  m.instr.thresholds = {
    90.342419401, 87.905378213, 87.098866453, 87.792478518,
    88.593731555, 86.992851401, 89.432151007, 89.263100177,
    91.659659270, 91.633973550, 91.725763997, 91.415052963,
    86.389487946, 89.238568951, 89.252575412, 90.587725090,
    90.684099871, 90.277119193, 89.647388522, 86.087726220,
    93.495441698, 89.519809558, 92.523531202, 87.267000343,
    90.823163600, 87.024052480, 87.393801363, 89.042188269,
    88.248743128, 91.965807767, 87.835792050, 89.701072468};
  return m;
}

}  // namespace emfi::glitch
