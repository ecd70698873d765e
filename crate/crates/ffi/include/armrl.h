#ifndef ARMRL_H
#define ARMRL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

#define ARMRL_OBS_DIM 28

#define ARMRL_GOAL_DIM 3

#define ARMRL_ACTION_DIM 5

/**
 * Result code of every exported function.
 */
typedef enum ArmrlStatus {
  ARMRL_STATUS_OK = 0,
  ARMRL_STATUS_NULL_POINTER = 1,
  ARMRL_STATUS_INVALID_ARGUMENT = 2,
  ARMRL_STATUS_DIMENSION_MISMATCH = 3,
  ARMRL_STATUS_EPISODE_COMPLETE = 4,
  ARMRL_STATUS_CHECKPOINT_ERROR = 5,
  ARMRL_STATUS_IO_ERROR = 6,
  ARMRL_STATUS_DIVERGENCE = 7,
  ARMRL_STATUS_CONFIG_ERROR = 8,
  ARMRL_STATUS_PANIC = 9,
  ARMRL_STATUS_INTERNAL = 10,
} ArmrlStatus;

typedef enum ArmrlScenario {
  ARMRL_SCENARIO_NO_OBSTACLE = 1,
  ARMRL_SCENARIO_MOVING_OBSTACLE = 2,
} ArmrlScenario;

typedef enum ArmrlRewardMode {
  ARMRL_REWARD_MODE_SPARSE = 0,
  ARMRL_REWARD_MODE_DENSE = 1,
} ArmrlRewardMode;

/**
 * Simulator instance with its own seeded random stream.
 */
typedef struct ArmrlEnv ArmrlEnv;

/**
 * Trained policy loaded from a checkpoint.
 */
typedef struct ArmrlPolicy ArmrlPolicy;

/**
 * Per-step diagnostics reported by [`armrl_env_step`].
 */
typedef struct ArmrlStepInfo {
  double target_distance;
  /**
   * Infinity when the scenario has no obstacle.
   */
  double obstacle_distance;
  double reward;
  bool collision;
  bool is_success;
  bool grasped;
  uint32_t step_index;
} ArmrlStepInfo;

/**
 * Outcome counts from [`armrl_policy_evaluate`].
 */
typedef struct ArmrlOutcome {
  uint64_t episodes;
  uint64_t success;
  uint64_t fail_to_reach;
  uint64_t collision;
  double mean_return;
} ArmrlOutcome;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the most recent error message of this thread into `buf` as a
 * NUL-terminated string, truncating to `len - 1` bytes. Returns the full
 * message length in bytes, excluding the terminator.
 *
 * # Safety
 * `buf` must be null or valid for writes of `len` bytes.
 */
size_t armrl_last_error_message(char *buf, size_t len);

/**
 * Evaluates the reward for one transition with the default thresholds and gains.
 * Pass `INFINITY` as `obstacle_distance` when there is no obstacle.
 *
 * # Safety
 * `achieved` and `desired` must point to 3 doubles; `out` to one double.
 */
enum ArmrlStatus armrl_reward(const double *achieved, const double *desired, double obstacle_distance, uint32_t mode, double *out);

/**
 * Creates a simulator with the default geometry and a reset episode.
 * `scenario` is an [`ArmrlScenario`] value.
 *
 * # Safety
 * `out` must be valid for writing one pointer.
 */
enum ArmrlStatus armrl_env_new(uint32_t scenario, uint64_t seed, struct ArmrlEnv **out);

/**
 * Releases a simulator. Null is ignored.
 *
 * # Safety
 * `env` must be null or a handle from [`armrl_env_new`] not yet freed.
 */
void armrl_env_free(struct ArmrlEnv *env);

/**
 * Selects sparse or dense rewards ([`ArmrlRewardMode`]) for the `reward` field of step info.
 *
 * # Safety
 * `env` must be a live handle.
 */
enum ArmrlStatus armrl_env_set_reward_mode(struct ArmrlEnv *env, uint32_t mode);

/**
 * Starts a new episode and writes the first observation. Any output may be null.
 *
 * # Safety
 * `env` must be a live handle; outputs must be null or hold 28, 3 and 3 doubles.
 */
enum ArmrlStatus armrl_env_reset(struct ArmrlEnv *env, double *obs_out, double *achieved_out, double *desired_out);

/**
 * Writes the current observation without advancing the episode.
 *
 * # Safety
 * As for [`armrl_env_reset`].
 */
enum ArmrlStatus armrl_env_observe(const struct ArmrlEnv *env, double *obs_out, double *achieved_out, double *desired_out);

/**
 * Advances one step with a 5-component action in [-1, 1].
 * Returns `EpisodeComplete` once the horizon is exhausted.
 *
 * # Safety
 * `env` must be a live handle, `action` must hold 5 doubles; outputs as for
 * [`armrl_env_reset`], `info_out` null or valid for one struct.
 */
enum ArmrlStatus armrl_env_step(struct ArmrlEnv *env, const double *action, double *obs_out, double *achieved_out, double *desired_out, struct ArmrlStepInfo *info_out);

/**
 * Loads a policy from a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` valid for writing one pointer.
 */
enum ArmrlStatus armrl_policy_load(const char *path, struct ArmrlPolicy **out);

/**
 * Releases a policy. Null is ignored.
 *
 * # Safety
 * `policy` must be null or a handle from [`armrl_policy_load`] not yet freed.
 */
void armrl_policy_free(struct ArmrlPolicy *policy);

/**
 * Deterministic action for a raw observation and desired goal.
 *
 * # Safety
 * `policy` must be a live handle; `obs` 28 doubles, `goal` 3, `action_out` 5.
 */
enum ArmrlStatus armrl_policy_act(const struct ArmrlPolicy *policy, const double *obs, const double *goal, double *action_out);

/**
 * Runs `episodes` deterministic evaluation episodes and tallies outcomes.
 *
 * # Safety
 * `policy` must be a live handle; `out` valid for one struct.
 */
enum ArmrlStatus armrl_policy_evaluate(const struct ArmrlPolicy *policy, uint32_t scenario, uint32_t mode, uint64_t episodes, uint64_t seed, struct ArmrlOutcome *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ARMRL_H */
