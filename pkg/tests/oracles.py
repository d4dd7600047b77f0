"""Frozen oracle values; regenerate with scripts/freeze_oracles.py."""

# B(u,u)(0) for u = exp(-x^2/2), whole line, default kernel constant
B_GAUSS_ORIGIN = {0.5: 0.23369497725510915, 0.25: 0.3333084249384266}
# average of the 1-D heat kernel started at t = -1.5 over B_1/2 x (-1, -1/2)
HEAT_AVG_UMINUS = 0.32101996261725796
# half-order parabolic carre du champ of the static field exp(-x^2/2)
C_GAUSS = {0.0: 0.23369497667140934, 1.0: 0.17615923343351547, 2.0: 0.085630484789071}
# tail of v = 1 on [-8, 8) outside B_1(0), s = 1/2
TAIL_ONE_L16 = 1.75
