import streamlit as st
import numpy as np
import pandas as pd
import plotly.graph_objects as go

import harness
from genmodel import STATE_NAMES
from matstat import trial_streams
from simulasi import STATE_TITLES, session_config


def main():
    try:
        st.set_page_config(layout="wide", page_title="Estimasi State")
    except:
        pass

    st.title("🎯 Estimasi State Dinamis")
    st.markdown("Jalankan satu filter pada rekaman PMU dari halaman Simulasi.")
    st.divider()

    truth = st.session_state.get("DSE_TRUTH")
    records = st.session_state.get("DSE_RECORDS")
    if truth is None or records is None:
        st.warning("⚠️ Belum ada data. Jalankan simulasi terlebih dahulu.")
        return

    config = session_config()
    try:
        cfg = config.build_experiment_config()
    except ValueError as e:
        st.error(f"Konfigurasi tidak valid: {e}")
        return

    kind = st.radio("Filter", list(harness.FILTER_KINDS), format_func=str.upper, horizontal=True)
    if kind == "enkf":
        st.caption(f"Ukuran ensemble: {cfg.enkf.ensemble_size}")

    if st.button("▶️ Jalankan Filter", type="primary"):
        with st.spinner(f"Menjalankan {kind.upper()}..."):
            try:
                _, ensemble_rng = trial_streams(cfg.seed, 0, 2)
                prior = harness.initial_prior(truth, cfg)
                st.session_state[f"DSE_RUN_{kind}"] = harness.run_filter(records, kind, cfg, prior, ensemble_rng)
            except Exception as e:
                st.error(f"Filter gagal: {e}")
                return

    run = st.session_state.get(f"DSE_RUN_{kind}")
    if run is None or len(run) != len(truth):
        st.info("💡 Tekan tombol di atas untuk menjalankan filter.")
        return

    col1, col2, col3 = st.columns(3)
    mean_ms, p95_ms = harness.timing_stats(run.step_seconds)
    col1.metric("Waktu rata-rata per langkah", f"{mean_ms:.2f} ms")
    col2.metric("Persentil 95", f"{p95_ms:.2f} ms")
    budget_ok = p95_ms < harness.STEP_BUDGET_MS
    col3.metric("Anggaran 60 SPS", "✅ Terpenuhi" if budget_ok else "❌ Terlampaui")

    errors = harness.mse(run.beliefs, truth, cfg.warmup)
    df_mse = pd.DataFrame({"State": list(STATE_NAMES), "MSE": errors})
    st.dataframe(df_mse.style.format({"MSE": "{:.3e}"}), use_container_width=True, hide_index=True)

    means = run.means()
    std = np.sqrt(np.maximum(run.variances(), 0.0))
    for i, name in enumerate(STATE_NAMES):
        fig = go.Figure()
        fig.add_trace(go.Scatter(x=truth.times, y=truth.states[:, i], name="Sebenarnya", line=dict(color="black")))
        fig.add_trace(go.Scatter(x=run.times, y=means[:, i], name=kind.upper(), line=dict(dash="dash")))
        fig.add_trace(go.Scatter(
            x=np.concatenate([run.times, run.times[::-1]]),
            y=np.concatenate([means[:, i] + 2 * std[:, i], (means[:, i] - 2 * std[:, i])[::-1]]),
            fill="toself", opacity=0.2, line=dict(width=0), name="±2σ",
        ))
        fig.update_layout(title=STATE_TITLES[name], xaxis_title="t (s)", height=300)
        st.plotly_chart(fig, use_container_width=True)


if __name__ == "__main__":
    main()
