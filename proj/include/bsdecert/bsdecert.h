#ifndef BSDECERT_H
#define BSDECERT_H

#include <stddef.h>

#if defined(_WIN32)
#  if defined(BSDECERT_BUILDING)
#    define BSDECERT_API __declspec(dllexport)
#  else
#    define BSDECERT_API __declspec(dllimport)
#  endif
#else
#  define BSDECERT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bsde_status {
    BSDE_OK = 0,
    BSDE_NUMERICAL_FAILURE = 1, /* divergence, gate or certification failure */
    BSDE_CONFIG_ERROR = 2,      /* malformed config or invalid input */
    BSDE_INVALID_HANDLE = 3
} bsde_status;

typedef struct bsde_config bsde_config;
typedef struct bsde_result bsde_result;

BSDECERT_API const char* bsde_version(void);

/* JSON of the last failure on the calling thread, "" when none. */
BSDECERT_API const char* bsde_last_error(void);

/* Worker cap for path-parallel loops; 0 restores the default. Results do not depend on it. */
BSDECERT_API void bsde_set_threads(unsigned n);

BSDECERT_API bsde_status bsde_config_parse(const char* json_text, bsde_config** out);
BSDECERT_API bsde_status bsde_config_load(const char* path, bsde_config** out);
BSDECERT_API void bsde_config_free(bsde_config* cfg);
BSDECERT_API bsde_status bsde_config_set_output_dir(bsde_config* cfg, const char* dir);
/* Strings below stay valid until the handle is freed or modified. */
BSDECERT_API const char* bsde_config_hash(const bsde_config* cfg);
BSDECERT_API const char* bsde_config_json(const bsde_config* cfg);

BSDECERT_API bsde_status bsde_solve(const bsde_config* cfg, bsde_result** out);
BSDECERT_API bsde_status bsde_certify(const bsde_config* cfg, bsde_result** out);
BSDECERT_API bsde_status bsde_check(const bsde_config* cfg, bsde_result** out);

/* family: linear | power | xlogx | xloglog; action: diagnose | concavify | transform. */
BSDECERT_API bsde_status bsde_modulus(const char* family, const double* params, size_t n_params,
                                      const char* action, double r, double u0, size_t points,
                                      const char* output_dir, bsde_result** out);

BSDECERT_API const char* bsde_result_summary(const bsde_result* res);
BSDECERT_API size_t bsde_result_file_count(const bsde_result* res);
BSDECERT_API const char* bsde_result_file(const bsde_result* res, size_t i);
BSDECERT_API void bsde_result_free(bsde_result* res);

/* name,params,formula CSV of the generator zoo. */
BSDECERT_API const char* bsde_zoo_list(void);

#ifdef __cplusplus
}
#endif

#endif
