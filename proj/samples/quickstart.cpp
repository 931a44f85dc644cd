// Generates a few intervals of the StaCon scene and prints what the
// motion-guided pipeline finds in each.

#include <cstdio>
#include <optional>

#include "avfusion/avfusion.hpp"

int main() {
  using namespace avfusion;
  const MicPairConfig mics;
  auto spec = builtin_scenarios().at("StaCon");
  spec.duration_s = 4.0;

  std::optional<MixtureParams> prev;
  for (const auto& interval : generate(spec, mics)) {
    const auto res = motion_guided_interval(interval.obs, mics, prev);
    prev = res.model;
    std::printf("interval %d: %zu objects\n", interval.obs.interval_index, res.objects.size());
    for (const auto& o : res.objects) {
      std::printf("  (%.3f, %.3f, %.3f) m  %s  audio mass %.1f\n", o.position.x, o.position.y, o.position.z,
                  o.speaking ? "speaking" : "silent  ", o.auditory_mass);
    }
  }
}
