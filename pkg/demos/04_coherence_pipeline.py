# Rabi -> T1 -> Hahn echo on the virtual instrument, then the hierarchy check.

import numpy as np

from nvlab import (EchoParams, NoiseModel, PowerCalibration, T1Params, extract_pi_pulse,
                   fit_sweep, run_sweep, validate_hierarchy)

seed = 2024
cal = PowerCalibration()

# %%
# Rabi at two powers: stronger drive, faster oscillation, shorter T2*
for dbm, stop, n in ((30, 1200, 120), (40, 600, 60)):
    data = run_sweep("rabi", np.linspace(0, stop, n), cal.rabi_params(dbm), NoiseModel(rng_seed=seed))
    fit = fit_sweep(data)
    pi = extract_pi_pulse(fit)
    print(f"{dbm} dBm: t_pi = {pi.duration:.1f} ± {pi.uncertainty:.1f} ns, "
          f"T2* = {1e3 * fit['T2_star']:.0f} ± {1e3 * fit.sigma('T2_star'):.0f} ns")
rabi = fit

# %%
t1 = fit_sweep(run_sweep("t1", np.linspace(0, 25, 40), T1Params(T1=1.78), NoiseModel(rng_seed=seed)))
print(t1.summary())

# %%
truth = EchoParams(T2=2.38, n=1.29, k=3.0, f_a=3.04, f_b=0.07)
echo = fit_sweep(run_sweep("echo", np.linspace(0, 5, 251), truth, NoiseModel(rng_seed=seed)))
print(echo.summary())

# %%
verdict = validate_hierarchy(t1, echo, rabi)
print(verdict)
print({k: round(v, 1) for k, v in verdict.margins.items()}, "sigma")
