#include "groundtrace/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "groundtrace/errors.hpp"
#include "groundtrace/json_io.hpp"

namespace groundtrace {

namespace {

constexpr double kLimitSlack = 1e-9;

std::string_view joint_type_name(JointType t) {
  switch (t) {
    case JointType::Revolute: return "revolute";
    case JointType::Prismatic: return "prismatic";
    case JointType::Fixed: return "fixed";
  }
  return "fixed";
}

Pose joint_motion(const Link& link, double q) {
  switch (link.joint_type) {
    case JointType::Revolute: return {Vec3::Zero(), UnitQuat::from_axis_angle(link.axis, q)};
    case JointType::Prismatic: return Pose::from_translation(link.axis * q);
    case JointType::Fixed: break;
  }
  return Pose::identity();
}

// World frames of every moving joint (after its origin offset, before its
// motion) plus the end-effector pose.
struct ChainFrames {
  std::vector<Pose> joint_frames;
  Pose ee;
};

ChainFrames chain_frames(const KinematicChain& chain, const JointVector& q) {
  ChainFrames out;
  Pose t = chain.base_pose;
  int j = 0;
  for (const Link& link : chain.links) {
    t = compose(t, link.origin);
    if (link.joint_type != JointType::Fixed) {
      out.joint_frames.push_back(t);
      t = compose(t, joint_motion(link, q[j++]));
    }
  }
  out.ee = t;
  return out;
}

Eigen::Matrix<double, 6, 1> pose_error(const Pose& target, const Pose& current) {
  Eigen::Matrix<double, 6, 1> e;
  e.head<3>() = target.translation - current.translation;
  e.tail<3>() = (target.rotation * current.rotation.conjugate()).rotation_vector();
  return e;
}

}  // namespace

int KinematicChain::dof() const {
  return static_cast<int>(std::count_if(links.begin(), links.end(), [](const Link& l) {
    return l.joint_type != JointType::Fixed;
  }));
}

Eigen::VectorXd KinematicChain::lower_limits() const {
  Eigen::VectorXd v(dof());
  int j = 0;
  for (const Link& l : links) {
    if (l.joint_type != JointType::Fixed) v[j++] = l.lower;
  }
  return v;
}

Eigen::VectorXd KinematicChain::upper_limits() const {
  Eigen::VectorXd v(dof());
  int j = 0;
  for (const Link& l : links) {
    if (l.joint_type != JointType::Fixed) v[j++] = l.upper;
  }
  return v;
}

void validate_chain(const KinematicChain& chain) {
  if (chain.dof() < 1) throw Error(ErrorCode::ConfigError, "chain has no moving joints");
  for (const Link& l : chain.links) {
    if (l.joint_type == JointType::Fixed) continue;
    if (std::abs(l.axis.norm() - 1.0) > 1e-9) {
      throw Error(ErrorCode::ConfigError, "link '" + l.name + "': axis must be unit length");
    }
    if (!(l.lower < l.upper)) {
      throw Error(ErrorCode::ConfigError, "link '" + l.name + "': limits need lo < hi");
    }
  }
  if (chain.neutral) check_joint_limits(chain, *chain.neutral);
}

KinematicChain parse_chain(const std::string& text) {
  const json doc = parse_json(text, ErrorCode::ConfigError, "chain config");
  KinematicChain chain;
  if (!doc.is_object() || !doc.contains("links") || !doc["links"].is_array()) {
    throw Error(ErrorCode::ConfigError, "chain config needs a 'links' array");
  }
  chain.base_pose = doc.contains("base_pose")
                        ? pose_from_json(doc["base_pose"], ErrorCode::ConfigError, "base_pose")
                        : Pose::identity();
  for (const json& jl : doc["links"]) {
    Link l;
    try {
      l.name = jl.at("name").get<std::string>();
      const auto type = jl.at("joint_type").get<std::string>();
      if (type == "revolute") l.joint_type = JointType::Revolute;
      else if (type == "prismatic") l.joint_type = JointType::Prismatic;
      else if (type == "fixed") l.joint_type = JointType::Fixed;
      else throw Error(ErrorCode::ConfigError, "link '" + l.name + "': unknown joint_type " + type);
      if (jl.contains("axis")) l.axis = vec3_from_json(jl["axis"], ErrorCode::ConfigError, l.name + ".axis");
      l.origin = pose_from_json(jl.at("origin"), ErrorCode::ConfigError, l.name + ".origin");
      if (jl.contains("limits")) {
        const auto lim = jl["limits"].get<std::vector<double>>();
        if (lim.size() != 2) throw Error(ErrorCode::ConfigError, "link '" + l.name + "': limits need 2 values");
        l.lower = lim[0];
        l.upper = lim[1];
      } else if (l.joint_type != JointType::Fixed) {
        throw Error(ErrorCode::ConfigError, "link '" + l.name + "': moving joint needs limits");
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ConfigError, std::string("chain link: ") + e.what());
    }
    chain.links.push_back(std::move(l));
  }
  if (doc.contains("neutral_joints")) {
    try {
      const auto v = doc["neutral_joints"].get<std::vector<double>>();
      chain.neutral = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ConfigError, std::string("neutral_joints: ") + e.what());
    }
  }
  try {
    validate_chain(chain);
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.detail());
  }
  return chain;
}

KinematicChain load_chain(const std::string& path) { return parse_chain(read_text_file(path)); }

std::string write_chain(const KinematicChain& chain) {
  ordered_json doc;
  doc["base_pose"] = pose_to_json(chain.base_pose);
  doc["links"] = ordered_json::array();
  for (const Link& l : chain.links) {
    ordered_json jl;
    jl["name"] = l.name;
    jl["joint_type"] = joint_type_name(l.joint_type);
    jl["axis"] = vec3_to_json(l.axis);
    jl["origin"] = pose_to_json(l.origin);
    if (l.joint_type != JointType::Fixed) jl["limits"] = {l.lower, l.upper};
    doc["links"].push_back(jl);
  }
  if (chain.neutral) {
    doc["neutral_joints"] = std::vector<double>(chain.neutral->begin(), chain.neutral->end());
  }
  return doc.dump(2) + "\n";
}

void check_joint_limits(const KinematicChain& chain, const JointVector& joints) {
  if (joints.size() != chain.dof()) {
    throw Error(ErrorCode::JointLimitViolation, "expected " + std::to_string(chain.dof()) +
                                                    " joint values, got " +
                                                    std::to_string(joints.size()));
  }
  int j = 0;
  for (const Link& l : chain.links) {
    if (l.joint_type == JointType::Fixed) continue;
    const double q = joints[j];
    if (!std::isfinite(q) || q < l.lower - kLimitSlack || q > l.upper + kLimitSlack) {
      throw Error(ErrorCode::JointLimitViolation,
                  "joint '" + l.name + "' = " + std::to_string(q) + " outside [" +
                      std::to_string(l.lower) + ", " + std::to_string(l.upper) + "]",
                  j);
    }
    ++j;
  }
}

Pose forward_kinematics(const KinematicChain& chain, const JointVector& joints) {
  check_joint_limits(chain, joints);
  return chain_frames(chain, joints).ee;
}

Eigen::MatrixXd jacobian(const KinematicChain& chain, const JointVector& joints) {
  check_joint_limits(chain, joints);
  const ChainFrames f = chain_frames(chain, joints);
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(6, chain.dof());
  int j = 0;
  for (const Link& l : chain.links) {
    if (l.joint_type == JointType::Fixed) continue;
    const Pose& frame = f.joint_frames[j];
    const Vec3 axis = frame.rotation.rotate(l.axis);
    if (l.joint_type == JointType::Revolute) {
      jac.block<3, 1>(0, j) = axis.cross(f.ee.translation - frame.translation);
      jac.block<3, 1>(3, j) = axis;
    } else {
      jac.block<3, 1>(0, j) = axis;
    }
    ++j;
  }
  return jac;
}

namespace {

bool dls_iterate(const KinematicChain& chain, const Pose& target, const IkParams& params,
                 IkSolution& sol) {
  const Eigen::VectorXd lo = chain.lower_limits(), hi = chain.upper_limits();
  const double lambda2 = params.damping * params.damping;
  for (int it = 0;; ++it) {
    const ChainFrames f = chain_frames(chain, sol.joints);
    const Eigen::Matrix<double, 6, 1> e = pose_error(target, f.ee);
    sol.iterations = it;
    sol.position_error = e.head<3>().norm();
    sol.angle_error = e.tail<3>().norm();
    if (sol.position_error <= params.pos_tol && sol.angle_error <= params.ang_tol) return true;
    if (it == params.max_iterations) return false;
    const Eigen::MatrixXd jac = jacobian(chain, sol.joints);
    const Eigen::Matrix<double, 6, 6> a =
        jac * jac.transpose() + lambda2 * Eigen::Matrix<double, 6, 6>::Identity();
    Eigen::VectorXd dq = jac.transpose() * a.ldlt().solve(e);
    dq = dq.cwiseMax(-params.max_step).cwiseMin(params.max_step);
    sol.joints = (sol.joints + dq).cwiseMax(lo).cwiseMin(hi);
  }
}

}  // namespace

IkSolution solve_ik_dls(const KinematicChain& chain, const Pose& target,
                        const JointVector& seed_joints, const IkParams& params) {
  check_joint_limits(chain, seed_joints);
  const Eigen::VectorXd lo = chain.lower_limits(), hi = chain.upper_limits();
  IkSolution sol;
  sol.joints = seed_joints.cwiseMax(lo).cwiseMin(hi);
  if (dls_iterate(chain, target, params, sol)) return sol;
  IkSolution best = sol;

  // Restarts from a fixed, target-independent sequence of postures.
  std::mt19937_64 rng(0x5eedULL);
  for (int r = 0; r < params.restarts; ++r) {
    IkSolution trial;
    trial.joints.resize(chain.dof());
    for (Eigen::Index j = 0; j < trial.joints.size(); ++j) {
      trial.joints[j] = std::uniform_real_distribution<double>(lo[j], hi[j])(rng);
    }
    if (dls_iterate(chain, target, params, trial)) {
      trial.iterations += (r + 1) * (params.max_iterations + 1);
      return trial;
    }
    if (trial.position_error + trial.angle_error < best.position_error + best.angle_error) {
      best = trial;
    }
  }
  throw Error(ErrorCode::IkDiverged,
              "no solution within tolerance after " + std::to_string(params.max_iterations) +
                  " iterations (position error " + std::to_string(best.position_error) +
                  " m, angle error " + std::to_string(best.angle_error) + " rad)");
}

JointVector neutral_posture(const KinematicChain& chain) {
  if (chain.neutral) return *chain.neutral;
  return 0.5 * (chain.lower_limits() + chain.upper_limits());
}

// --- grasp ----------------------------------------------------------------

void validate_grasp(const GraspPose& g) {
  if (std::abs(g.approach_axis.norm() - 1.0) > 1e-9) {
    throw Error(ErrorCode::SchemaError, "grasp approach_axis must be unit length");
  }
  if (!(g.pre_grasp_offset >= 0.0) || !std::isfinite(g.pre_grasp_offset)) {
    throw Error(ErrorCode::SchemaError, "grasp pre_grasp_offset_m must be >= 0");
  }
}

std::string write_grasp(const GraspPose& g) {
  ordered_json doc;
  doc["pose"] = pose_to_json(g.pose);
  doc["approach_axis"] = vec3_to_json(g.approach_axis);
  doc["pre_grasp_offset_m"] = g.pre_grasp_offset;
  return doc.dump(2) + "\n";
}

GraspPose parse_grasp(const std::string& text) {
  const json doc = parse_json(text, ErrorCode::SyntaxError, "grasp");
  if (!doc.is_object() || !doc.contains("pose") || !doc.contains("approach_axis") ||
      !doc.contains("pre_grasp_offset_m") || !doc["pre_grasp_offset_m"].is_number()) {
    throw Error(ErrorCode::SchemaError, "grasp needs pose, approach_axis, pre_grasp_offset_m");
  }
  GraspPose g;
  g.pose = pose_from_json(doc["pose"], ErrorCode::SchemaError, "grasp.pose");
  g.approach_axis = vec3_from_json(doc["approach_axis"], ErrorCode::SchemaError, "approach_axis");
  g.pre_grasp_offset = doc["pre_grasp_offset_m"].get<double>();
  validate_grasp(g);
  return g;
}

GraspPose top_down_grasp(const Vec3& extent, double pre_grasp_offset) {
  GraspPose g;
  // Gripper Z along world -Z: a half turn about X.
  g.pose = {Vec3(0.0, 0.0, 0.5 * extent.z()), UnitQuat(0.0, 1.0, 0.0, 0.0)};
  g.approach_axis = Vec3::UnitZ();
  g.pre_grasp_offset = pre_grasp_offset;
  return g;
}

GraspPose flip_about_approach(const GraspPose& grasp) {
  GraspPose g = grasp;
  g.pose.rotation = grasp.pose.rotation * UnitQuat::from_axis_angle(grasp.approach_axis, std::numbers::pi);
  return g;
}

// --- trajectories ---------------------------------------------------------

EeTrajectory grasp_to_ee_trajectory(const ObjectTrajectory& object_traj, const Pose& object_pose0,
                                    const GraspPose& grasp, double frame_dt,
                                    const PhaseTiming& timing) {
  const Pose retract = Pose::from_translation(-grasp.pre_grasp_offset * grasp.approach_axis);
  const Pose grasp_world = compose(object_pose0, grasp.pose);
  const Pose pre_grasp = compose(grasp_world, retract);

  EeTrajectory out;
  out.approach_steps = std::max(0, timing.approach_steps);
  out.manipulate_steps = static_cast<int>(object_traj.poses.size());
  out.release_steps = std::max(0, timing.release_steps);

  double t = 0.0;
  const double approach_dt =
      out.approach_steps > 0 ? timing.approach_duration / out.approach_steps : 0.0;
  for (int k = 0; k < out.approach_steps; ++k) {
    const double s = static_cast<double>(k) / out.approach_steps;
    Pose p = pre_grasp;
    p.translation = (1.0 - s) * pre_grasp.translation + s * grasp_world.translation;
    out.steps.push_back({p, Gripper::Open});
    out.timestamps.push_back(t);
    t += approach_dt;
  }
  for (int f = 0; f < out.manipulate_steps; ++f) {
    const Pose p = compose(object_pose0, compose(object_traj.poses[f], grasp.pose));
    out.steps.push_back({p, Gripper::Closed});
    out.timestamps.push_back(t + f * frame_dt);
  }
  t += (out.manipulate_steps > 0 ? out.manipulate_steps : 1) * frame_dt;
  const Pose final_pose = out.manipulate_steps > 0 ? out.steps.back().pose : grasp_world;
  const Pose final_retract = compose(final_pose, retract);
  const double release_dt =
      out.release_steps > 1 ? timing.release_duration / (out.release_steps - 1) : 0.0;
  for (int k = 0; k < out.release_steps; ++k) {
    const double s = out.release_steps > 1 ? static_cast<double>(k) / (out.release_steps - 1) : 0.0;
    Pose p = final_pose;
    p.translation = (1.0 - s) * final_pose.translation + s * final_retract.translation;
    out.steps.push_back({p, Gripper::Open});
    out.timestamps.push_back(t + k * release_dt);
  }
  return out;
}

JointTrajectory trajectory_to_joints(const KinematicChain& chain, const EeTrajectory& ee,
                                     const JointVector& seed_joints, const IkParams& params) {
  JointTrajectory out;
  out.timestamps = ee.timestamps;
  JointVector warm = seed_joints;
  for (std::size_t k = 0; k < ee.steps.size(); ++k) {
    IkSolution sol;
    try {
      sol = solve_ik_dls(chain, ee.steps[k].pose, warm, params);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::IkDiverged) throw;
      throw Error(ErrorCode::IkDiverged, "step " + std::to_string(k) + ": " + e.detail(),
                  static_cast<std::int64_t>(k));
    }
    if (k > 0) {
      const double jump = (sol.joints - warm).cwiseAbs().maxCoeff();
      if (jump > params.max_joint_step) {
        throw Error(ErrorCode::JointJumpExceeded,
                    "step " + std::to_string(k) + ": joint change " + std::to_string(jump) +
                        " rad exceeds " + std::to_string(params.max_joint_step),
                    static_cast<std::int64_t>(k));
      }
    }
    out.max_position_error = std::max(out.max_position_error, sol.position_error);
    out.max_angle_error = std::max(out.max_angle_error, sol.angle_error);
    out.steps.push_back(sol.joints);
    out.gripper.push_back(ee.steps[k].gripper);
    warm = sol.joints;
  }
  return out;
}

}  // namespace groundtrace
