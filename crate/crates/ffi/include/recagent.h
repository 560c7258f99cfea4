#ifndef RECAGENT_H
#define RECAGENT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RecagentStatus {
  RECAGENT_STATUS_OK = 0,
  RECAGENT_STATUS_NULL_ARGUMENT = 1,
  RECAGENT_STATUS_INVALID_UTF8 = 2,
  /**
   * Malformed JSON or a value that fails validation.
   */
  RECAGENT_STATUS_INVALID_INPUT = 3,
  /**
   * Missing or unreadable fixture files.
   */
  RECAGENT_STATUS_IO = 4,
  /**
   * Action or snapshot rejected by the simulator.
   */
  RECAGENT_STATUS_REJECTED = 5,
  RECAGENT_STATUS_PANIC = 6,
} RecagentStatus;

/**
 * A loaded scenario instance.
 */
typedef struct RecagentScenario RecagentScenario;

/**
 * A restorable point in one scenario instance.
 */
typedef struct RecagentSnapshot RecagentSnapshot;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or an empty string.
 * Valid until the next call into this library on the same thread.
 */
const char *recagent_last_error(void);

/**
 * Library version, statically allocated.
 */
const char *recagent_version(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed. Null is a no-op.
 */
void recagent_string_free(char *s);

/**
 * Loads the bundle directory `dir`.
 *
 * # Safety
 * `dir` must be a valid C string; `out` must be writable.
 */
enum RecagentStatus recagent_scenario_load(const char *dir, struct RecagentScenario **out);

/**
 * # Safety
 * `s` must come from `recagent_scenario_load` and not have been freed.
 */
void recagent_scenario_free(struct RecagentScenario *s);

/**
 * Current screen as a JSON record.
 *
 * # Safety
 * `s` must be a live scenario handle; `out_json` must be writable.
 */
enum RecagentStatus recagent_scenario_observe(const struct RecagentScenario *s, char **out_json);

/**
 * Applies an action record such as `{"action_type":"click","target_element_id":"el_ok"}`
 * and returns the resulting screen.
 *
 * # Safety
 * `s` must be a live scenario handle; `action_json` a valid C string;
 * `out_json` writable.
 */
enum RecagentStatus recagent_scenario_apply(struct RecagentScenario *s,
                                            const char *action_json,
                                            char **out_json);

/**
 * # Safety
 * `s` must be a live scenario handle; `out` writable.
 */
enum RecagentStatus recagent_scenario_snapshot(struct RecagentScenario *s,
                                               struct RecagentSnapshot **out);

/**
 * Restores a snapshot taken from the same scenario handle. The snapshot
 * stays valid and can be restored again.
 *
 * # Safety
 * Both handles must be live; `out_json` may be null when the state is not
 * wanted.
 */
enum RecagentStatus recagent_scenario_restore(struct RecagentScenario *s,
                                              const struct RecagentSnapshot *snap,
                                              char **out_json);

/**
 * # Safety
 * `snap` must come from `recagent_scenario_snapshot` and not have been freed.
 */
void recagent_snapshot_free(struct RecagentSnapshot *snap);

/**
 * Candidate set for `goal` on the current screen.
 *
 * `script_path` holds scripted recall responses; when null the model
 * pathway is skipped. `config_json` is a session config record or null
 * for defaults. `excluded_json` is a JSON array of element ids or null.
 *
 * # Safety
 * `s` must be a live handle; string arguments valid C strings or null
 * where allowed; `out_json` writable.
 */
enum RecagentStatus recagent_recommend(const struct RecagentScenario *s,
                                       const char *goal,
                                       const char *script_path,
                                       const char *config_json,
                                       const char *excluded_json,
                                       char **out_json);

/**
 * Runs `task` on a fresh instance of the bundle at `scenario_dir`, with
 * the scripted responses in its `script.jsonl`. `answers_json` is a JSON
 * array of feedback answers (null for none). Writes the run log: one
 * event per line, then the report line.
 *
 * # Safety
 * String arguments must be valid C strings or null where allowed;
 * `out_log` writable.
 */
enum RecagentStatus recagent_run_task(const char *scenario_dir,
                                      const char *task,
                                      const char *answers_json,
                                      const char *config_json,
                                      char **out_log);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RECAGENT_H */
