import streamlit as st
import numpy as np
import pandas as pd
import plotly.express as px
import plotly.graph_objects as go

import mixnoise
import scenario
from config_manager import ConfigManager
from genmodel import STATE_NAMES
from matstat import trial_streams

STATE_TITLES = {
    "delta": "δ (rad)",
    "domega": "Δω (pu)",
    "eq_p": "e'q (pu)",
    "ed_p": "e'd (pu)",
}


def session_config() -> ConfigManager:
    """Config store shared by all dashboard pages for this browser session."""
    if "DSE_CONFIG" not in st.session_state:
        st.session_state["DSE_CONFIG"] = ConfigManager()
    return st.session_state["DSE_CONFIG"]


def noise_density_figure(g: mixnoise.GaussianMixture, title: str) -> go.Figure:
    """Mixture density with its moment-matched Gaussian for comparison."""
    mean, var = mixnoise.moments(g)
    spread = 5.0 * float(np.sqrt(max(g.variances.max(), var)))
    lo = min(float(g.means.min()), mean) - spread
    hi = max(float(g.means.max()), mean) + spread
    x = np.linspace(lo, hi, 600)
    fig = go.Figure()
    fig.add_trace(go.Scatter(x=x, y=mixnoise.pdf(g, x), name="Campuran Gaussian"))
    fig.add_trace(go.Scatter(x=x, y=mixnoise.pdf(mixnoise.matched_gaussian(g), x),
                             name="Gaussian setara", line=dict(dash="dash")))
    fig.update_layout(title=title, xaxis_title="galat", yaxis_title="densitas", height=320)
    return fig


def main():
    try:
        st.set_page_config(layout="wide", page_title="Simulasi Truth & PMU")
    except:
        pass

    st.title("⚡ Simulasi Generator & Data PMU")
    st.markdown("Lintasan state sebenarnya dari titik keseimbangan, lalu P/Q dikorupsi noise campuran Gaussian.")
    st.divider()

    config = session_config()
    try:
        cfg = config.build_scenario_config()
    except ValueError as e:
        st.error(f"Konfigurasi skenario tidak valid: {e}")
        st.info("Perbaiki nilai di halaman Pengaturan.")
        return

    col_left, col_right = st.columns([1.6, 1], gap="large")

    with col_right:
        st.markdown("### 📋 Ringkasan Skenario")
        info = scenario.describe(cfg)
        c1, c2 = st.columns(2)
        c1.metric("Durasi", f"{info['duration']:.1f} s")
        c2.metric("Laju PMU", f"{cfg.pmu_rate} SPS")
        c1.metric("Jumlah tick", f"{int(info['ticks'])}")
        c2.metric("Event", f"{int(info['events'])}")
        for ev in cfg.events:
            st.caption(f"t = {ev.time:.3f} s: {ev.field} → {ev.value}")

        st.markdown("### 🎲 Noise Pengukuran")
        st.plotly_chart(noise_density_figure(cfg.noise.p, "Noise kanal P"), use_container_width=True)
        if cfg.noise.q != cfg.noise.p:
            st.plotly_chart(noise_density_figure(cfg.noise.q, "Noise kanal Q"), use_container_width=True)
        st.caption(f"Varians P: {info['p_noise_var']:.3e}, varians Q: {info['q_noise_var']:.3e}")

    with col_left:
        if st.button("▶️ Jalankan Simulasi", type="primary"):
            with st.spinner("Mengintegrasikan model generator..."):
                try:
                    truth = scenario.simulate_truth(cfg)
                    noise_rng, _ = trial_streams(cfg.seed, 0, 2)
                    records = scenario.corrupt(truth, cfg.noise, noise_rng, cfg.vt_noise)
                except Exception as e:
                    st.error(f"Simulasi gagal: {e}")
                    return
            st.session_state["DSE_TRUTH"] = truth
            st.session_state["DSE_RECORDS"] = records

        truth = st.session_state.get("DSE_TRUTH")
        records = st.session_state.get("DSE_RECORDS")
        if truth is None:
            st.info("💡 Tekan tombol di atas untuk membangkitkan lintasan.")
            return

        df_states = pd.DataFrame(truth.states, columns=list(STATE_NAMES))
        df_states["t"] = truth.times
        st.subheader("📈 State Sebenarnya")
        for name in STATE_NAMES:
            fig = px.line(df_states, x="t", y=name, title=STATE_TITLES[name], height=260)
            st.plotly_chart(fig, use_container_width=True)

        st.subheader("📡 Pengukuran PMU")
        df_meas = pd.DataFrame({
            "t": truth.times,
            "P bersih": truth.clean_measurements[:, 0],
            "P terukur": [r.pt for r in records],
            "Q bersih": truth.clean_measurements[:, 1],
            "Q terukur": [r.qt for r in records],
        })
        st.plotly_chart(px.line(df_meas, x="t", y=["P terukur", "P bersih"], height=300), use_container_width=True)
        st.plotly_chart(px.line(df_meas, x="t", y=["Q terukur", "Q bersih"], height=300), use_container_width=True)
        st.caption(f"Checksum aliran rekaman: `{scenario.records_checksum(records)}`")


if __name__ == "__main__":
    main()
