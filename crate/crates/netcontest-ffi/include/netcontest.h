/* C interface for the netcontest library.
 *
 * All functions return an error code (NC_OK == 0 on success). Instances are
 * opaque handles owned by the library; release them with nc_instance_free.
 */

#ifndef NETCONTEST_H
#define NETCONTEST_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#define NC_OK 0
#define NC_ERR_PARSE 1
#define NC_ERR_VALIDATION 2
#define NC_ERR_CONVERGENCE 3
#define NC_ERR_SINGULAR 4
#define NC_ERR_INDEX 5
#define NC_ERR_NULL 6
#define NC_ERR_OTHER 7

typedef struct NcInstance NcInstance;

/* Parse instance JSON ({"budgets":[...],"edges":[[i,j,v],...]}); on success
 * *out receives an owned handle. */
int nc_instance_parse(const char *json, NcInstance **out);

void nc_instance_free(NcInstance *handle);

/* Player count, or -1 on a null handle. */
int nc_instance_players(const NcInstance *handle);

/* Equilibrium payoffs and marginal costs; either buffer may be NULL to skip.
 * len is the capacity of the non-NULL buffers and must be >= player count. */
int nc_solve(const NcInstance *handle, double *payoffs, double *lambda, size_t len);

/* Equilibrium payoff derivatives at tau = 0 for transferring budget a -> b. */
int nc_transfer_derivative(const NcInstance *handle, size_t a, size_t b,
                           double *d_u_a, double *d_u_b);

/* Static message for an error code. */
const char *nc_error_message(int code);

#ifdef __cplusplus
}
#endif

#endif /* NETCONTEST_H */
