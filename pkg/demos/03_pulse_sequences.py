# Writing, building and compiling pulse sequences.

from nvlab.pulses import HardwareProfile, block_variants, build, compile, parse, render

hw = HardwareProfile()

# %%
text = "pump(350us); pi/2; tau; pi; tau; pi/2@90; readout(10us)"
seq = parse(text)
print(render(seq))
print("sweep variable:", seq.symbols())

# %%
# resolve the angles with a calibrated pi-pulse and a concrete tau, then compile
table = compile(seq.resolve(t_pi=44.0, tau=1000.0), hw, offset=hw.aom_delay)
print(table.to_text())
print("MW pulse lengths (ticks):", [b - a for a, b in table.intervals("MW")])

# %%
# the canonical builders and the three images of a measurement block
echo = build("echo", t_pi=44.0, tau=500.0, hw=hw)
print(echo)
for name, tab in block_variants(echo, hw, offset=200.0).items():
    print(f"{name:10s}", {ch: len(tab.intervals(ch)) for ch in ("MW", "LASER", "CAMERA")})
