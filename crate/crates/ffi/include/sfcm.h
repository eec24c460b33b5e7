/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef SFCM_H
#define SFCM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum SfcmStatus {
  SFCM_STATUS_OK = 0,
  SFCM_STATUS_NULL_ARGUMENT = 1,
  SFCM_STATUS_INVALID_UTF8 = 2,
  SFCM_STATUS_VALIDATION = 3,
  SFCM_STATUS_ROLE = 4,
  SFCM_STATUS_COVERAGE = 5,
  SFCM_STATUS_CONSTRAINT = 6,
  SFCM_STATUS_INSUFFICIENT_BALANCE = 7,
  SFCM_STATUS_LINK = 8,
  SFCM_STATUS_MATURITY = 9,
  SFCM_STATUS_SEQUENCE = 10,
  SFCM_STATUS_STATE = 11,
  SFCM_STATUS_DUPLICATE = 12,
  SFCM_STATUS_NOT_FOUND = 13,
  SFCM_STATUS_FUND = 14,
  SFCM_STATUS_CONFIG = 15,
  SFCM_STATUS_INTEGRITY = 16,
  SFCM_STATUS_INTERNAL = 17,
} SfcmStatus;

typedef enum SfcmRole {
  SFCM_ROLE_INVESTOR = 0,
  SFCM_ROLE_CUSTOMER = 1,
  SFCM_ROLE_FINANCIAL_INSTITUTION = 2,
  SFCM_ROLE_GENERAL_CONTRACTOR = 3,
  SFCM_ROLE_SUB_CONTRACTOR = 4,
  SFCM_ROLE_SUPPLIER = 5,
  SFCM_ROLE_DESIGN_ARCHITECT = 6,
  SFCM_ROLE_TAX_AUDITOR = 7,
} SfcmRole;

typedef enum SfcmDao {
  SFCM_DAO_INVESTORS = 0,
  SFCM_DAO_OPERATORS = 1,
} SfcmDao;

/**
 * Opaque engine handle.
 */
typedef struct SfcmEngine SfcmEngine;

/**
 * Opaque handle to a finished scenario run.
 */
typedef struct SfcmRun SfcmRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next call into the library on this thread.
 */
const char *sfcm_last_error_message(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void sfcm_string_free(char *s);

/**
 * Creates an engine with default parameters.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SfcmStatus sfcm_engine_new(struct SfcmEngine **out);

/**
 * # Safety
 * `handle` must come from [`sfcm_engine_new`] and not have been freed.
 */
void sfcm_engine_free(struct SfcmEngine *handle);

/**
 * Moves the engine clock forward to `tick`.
 *
 * # Safety
 * `handle` must be a live engine.
 */
enum SfcmStatus sfcm_advance_clock(struct SfcmEngine *handle, uint64_t tick);

/**
 * # Safety
 * `handle` must be a live engine; `account` a NUL-terminated string.
 */
enum SfcmStatus sfcm_open_account(struct SfcmEngine *handle,
                                  const char *account,
                                  enum SfcmRole account_role);

/**
 * # Safety
 * `handle` must be a live engine; `account` a NUL-terminated string.
 */
enum SfcmStatus sfcm_open_general_contractor(struct SfcmEngine *handle,
                                             const char *account,
                                             uint64_t soa_cap);

/**
 * # Safety
 * `handle` must be a live engine; strings NUL-terminated.
 */
enum SfcmStatus sfcm_mint_investor(struct SfcmEngine *handle,
                                   const char *issuer,
                                   const char *account,
                                   uint64_t amount);

/**
 * Freezes `floor(rate_ppm × requested / 10^6)` investor tokens and mints
 * as many operator tokens to `gc`. The new credit code is written to
 * `out_code`.
 *
 * # Safety
 * `handle` must be a live engine; strings NUL-terminated; `out_code` valid.
 */
enum SfcmStatus sfcm_freeze_and_mint(struct SfcmEngine *handle,
                                     const char *issuer,
                                     const char *gc,
                                     uint64_t requested_work_value,
                                     uint64_t rate_ppm,
                                     char **out_code);

/**
 * # Safety
 * `handle` must be a live engine; strings NUL-terminated.
 */
enum SfcmStatus sfcm_transfer(struct SfcmEngine *handle,
                              const char *from,
                              const char *to,
                              uint64_t amount,
                              const char *invoice_ref);

/**
 * Burns the holder's whole operator balance; the amount is written to
 * `out_amount`.
 *
 * # Safety
 * `handle` must be a live engine; strings NUL-terminated; `out_amount` valid.
 */
enum SfcmStatus sfcm_redeem_all(struct SfcmEngine *handle,
                                const char *issuer,
                                const char *holder,
                                uint64_t *out_amount);

/**
 * # Safety
 * `handle` must be a live engine; `code` NUL-terminated.
 */
enum SfcmStatus sfcm_mature_credit(struct SfcmEngine *handle, const char *code);

/**
 * Sells a matured credit; the profit minted to investors is written to
 * `out_profit`.
 *
 * # Safety
 * `handle` must be a live engine; strings NUL-terminated; `out_profit` valid.
 */
enum SfcmStatus sfcm_sell_credit(struct SfcmEngine *handle,
                                 const char *issuer,
                                 const char *code,
                                 uint64_t sale_price,
                                 uint64_t *out_profit);

/**
 * Closes the fund. The payout table is written to `out_json` as a JSON
 * object mapping investor id to amount.
 *
 * # Safety
 * `handle` must be a live engine; `issuer` NUL-terminated; `out_json` valid.
 */
enum SfcmStatus sfcm_close_fund(struct SfcmEngine *handle, const char *issuer, char **out_json);

/**
 * # Safety
 * `handle` must be a live engine; `account` NUL-terminated; `out` valid.
 */
enum SfcmStatus sfcm_balance(struct SfcmEngine *handle,
                             const char *account,
                             enum SfcmDao dao,
                             uint64_t *out);

/**
 * Writes the event log (one JSON record per line) to `out_jsonl`.
 *
 * # Safety
 * `handle` must be a live engine; `out_jsonl` valid.
 */
enum SfcmStatus sfcm_event_log(struct SfcmEngine *handle, char **out_jsonl);

/**
 * Number of constraint violations in the engine's current state.
 *
 * # Safety
 * `handle` must be a live engine; `out_count` valid.
 */
enum SfcmStatus sfcm_violation_count(struct SfcmEngine *handle, uint64_t *out_count);

/**
 * Replays a log and verifies its hash chain. On success the number of
 * constraint violations in the final state is written to
 * `out_violations`. A broken chain returns `SFCM_STATUS_INTEGRITY`.
 *
 * # Safety
 * `jsonl` must be NUL-terminated; `out_violations` valid.
 */
enum SfcmStatus sfcm_replay_verify(const char *jsonl, uint64_t *out_violations);

/**
 * Runs a scenario. `config_toml` may be NULL for the default scenario.
 *
 * # Safety
 * `config_toml` must be NULL or NUL-terminated; `out_run` valid.
 */
enum SfcmStatus sfcm_run_scenario(const char *config_toml, struct SfcmRun **out_run);

/**
 * # Safety
 * `run` must come from [`sfcm_run_scenario`] and not have been freed.
 */
void sfcm_run_free(struct SfcmRun *run);

/**
 * # Safety
 * `run` must be a live run handle; `out_jsonl` valid.
 */
enum SfcmStatus sfcm_run_event_log(const struct SfcmRun *run, char **out_jsonl);

/**
 * # Safety
 * `run` must be a live run handle; `out_json` valid.
 */
enum SfcmStatus sfcm_run_report(const struct SfcmRun *run, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SFCM_H */
