#pragma once

#include <string>
#include <vector>

#include "domlearn/world.hpp"

namespace domlearn::testing {

inline Part box(std::string name, Vec3 center, Vec3 size, Vec3 rpy = {0, 0, 0}) {
  Part p;
  p.name = std::move(name);
  p.center = center;
  p.orientation = rpy;
  for (int i = 0; i < 3; ++i) {
    p.bbox[i] = center[i] - size[i] / 2;
    p.bbox[i + 3] = center[i] + size[i] / 2;
  }
  return p;
}

inline WorldState scene(std::vector<Part> parts, Vec3 gripper = {0.567, 0.055, 0.124}, bool closed = false,
                        double surface_z = -0.016) {
  WorldState w;
  w.parts = std::move(parts);
  w.robot = RobotState{"arm", gripper, closed};
  w.table = TableState{"table", surface_z};
  return w;
}

}  // namespace domlearn::testing
