#pragma once

#include <Eigen/Dense>

#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "groundtrace/geometry.hpp"
#include "groundtrace/grounding.hpp"

namespace groundtrace {

enum class JointType { Revolute, Prismatic, Fixed };

struct Link {
  std::string name;
  JointType joint_type = JointType::Fixed;
  Vec3 axis = Vec3::UnitZ();
  Pose origin;  // offset from the previous link frame
  double lower = 0.0;
  double upper = 0.0;
};

struct KinematicChain {
  std::vector<Link> links;
  Pose base_pose;
  /// Optional IK seed posture ("neutral_joints" in the config file).
  std::optional<Eigen::VectorXd> neutral;

  int dof() const;
  Eigen::VectorXd lower_limits() const;
  Eigen::VectorXd upper_limits() const;
};

using JointVector = Eigen::VectorXd;

/// Checks unit axes and lo < hi for moving joints. Throws ConfigError.
void validate_chain(const KinematicChain& chain);
KinematicChain parse_chain(const std::string& text);
KinematicChain load_chain(const std::string& path);
std::string write_chain(const KinematicChain& chain);

/// Throws JointLimitViolation when |joints| != dof or a value is outside its limits.
void check_joint_limits(const KinematicChain& chain, const JointVector& joints);

Pose forward_kinematics(const KinematicChain& chain, const JointVector& joints);

/// 6 x dof geometric Jacobian in the world frame: linear rows, then angular rows.
Eigen::MatrixXd jacobian(const KinematicChain& chain, const JointVector& joints);

struct IkParams {
  double damping = 0.05;
  double max_step = 0.1;          // per joint, per iteration
  double pos_tol = 1e-3;          // m
  double ang_tol = 0.5 * std::numbers::pi / 180.0;  // rad
  int max_iterations = 200;
  /// Extra DLS runs from fixed pseudo-random postures when the seed fails.
  int restarts = 16;
  double max_joint_step = 0.2;    // between consecutive trajectory steps
};

struct IkSolution {
  JointVector joints;
  int iterations = 0;
  double position_error = 0.0;
  double angle_error = 0.0;
};

/// Damped least squares. Throws IkDiverged and JointLimitViolation (bad seed).
IkSolution solve_ik_dls(const KinematicChain& chain, const Pose& target,
                        const JointVector& seed_joints, const IkParams& params = {});

struct GraspPose {
  Pose pose;                      // gripper frame in object frame
  Vec3 approach_axis = Vec3::UnitZ();  // gripper frame
  double pre_grasp_offset = 0.08;

  friend bool operator==(const GraspPose&, const GraspPose&) = default;
};

void validate_grasp(const GraspPose& grasp);
std::string write_grasp(const GraspPose& grasp);
GraspPose parse_grasp(const std::string& text);

/// Top-down grasp at the centre of the top face of an object of the given extent.
GraspPose top_down_grasp(const Vec3& extent, double pre_grasp_offset = 0.08);

/// The same parallel-jaw grasp turned half a revolution about its approach axis.
GraspPose flip_about_approach(const GraspPose& grasp);

enum class Gripper { Open = 0, Closed = 1 };

struct EeStep {
  Pose pose;
  Gripper gripper = Gripper::Open;
};

struct PhaseTiming {
  int approach_steps = 10;
  double approach_duration = 1.0;  // s
  int release_steps = 10;          // first step opens at the final pose
  double release_duration = 1.0;   // s
};

struct EeTrajectory {
  std::vector<EeStep> steps;
  std::vector<double> timestamps;
  int approach_steps = 0;
  int manipulate_steps = 0;
  int release_steps = 0;
};

/// Approach (open) -> ride the object rigidly (closed) -> open and retract.
EeTrajectory grasp_to_ee_trajectory(const ObjectTrajectory& object_traj, const Pose& object_pose0,
                                    const GraspPose& grasp, double frame_dt,
                                    const PhaseTiming& timing = {});

struct JointTrajectory {
  std::vector<JointVector> steps;
  std::vector<Gripper> gripper;
  std::vector<double> timestamps;
  double max_position_error = 0.0;
  double max_angle_error = 0.0;
};

/// Sequential warm-started IK. Throws IkDiverged(step) and JointJumpExceeded(step).
JointTrajectory trajectory_to_joints(const KinematicChain& chain, const EeTrajectory& ee,
                                     const JointVector& seed_joints, const IkParams& params = {});

/// The configured neutral posture, or the midpoint of every joint range.
JointVector neutral_posture(const KinematicChain& chain);

}  // namespace groundtrace
