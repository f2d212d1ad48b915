import streamlit as st
import importlib
import pandas as pd
import plotly.graph_objects as go

# Import our toolkit modules
import harness
from config_manager import ConfigError, DEFAULT_VALUES
from genmodel import STATE_NAMES
from simulasi import STATE_TITLES, session_config

# --- KONFIGURASI HALAMAN UTAMA ---
st.set_page_config(layout="wide", page_title="DSE: UKF vs EnKF")

# ==============================================================================
# 1. UTILITIES
# ==============================================================================

def run_module_safely(module_name):
    """Menjalankan modul halaman tanpa error double st.set_page_config"""
    original_set_page_config = st.set_page_config
    st.set_page_config = lambda *args, **kwargs: None

    try:
        module = importlib.import_module(module_name)
        module.main()
    except Exception as e:
        st.error(f"Error pada modul {module_name}: {e}")
        st.info("Silakan pilih modul lain atau kembali ke dashboard utama.")
    finally:
        st.set_page_config = original_set_page_config


def comparison_chart(report: harness.MseReport, state_index: int) -> go.Figure:
    """Truth and both estimates of one state from the first trial."""
    truth = report.example_truth
    name = STATE_NAMES[state_index]
    fig = go.Figure()
    fig.add_trace(go.Scatter(x=truth.times, y=truth.states[:, state_index], name="Sebenarnya",
                             line=dict(color="black")))
    for kind, run in report.example_runs.items():
        fig.add_trace(go.Scatter(x=run.times, y=run.means()[:, state_index], name=kind.upper(),
                                 line=dict(dash="dash")))
    fig.update_layout(title=STATE_TITLES[name], xaxis_title="t (s)", height=300)
    return fig


def squared_error_chart(report: harness.MseReport, state_index: int) -> go.Figure:
    truth = report.example_truth
    fig = go.Figure()
    for kind, run in report.example_runs.items():
        err = harness.squared_errors(run, truth)[:, state_index]
        fig.add_trace(go.Scatter(x=run.times, y=err, name=kind.upper()))
    fig.update_layout(title=f"Galat kuadrat {STATE_TITLES[STATE_NAMES[state_index]]}",
                      xaxis_title="t (s)", yaxis_type="log", height=300)
    return fig

# ==============================================================================
# 2. MAIN NAVIGATION
# ==============================================================================

def main():
    config = session_config()

    with st.sidebar:
        st.title("🎛️ Navigasi DSE")
        menu = st.radio("Pilih Modul", [
            "🏆 Dashboard Perbandingan",
            "⚡ Simulasi",
            "🎯 Estimasi",
            "📉 Ukuran Ensemble",
            "⚙️ Pengaturan"
        ])

        st.divider()

        report = st.session_state.get("DSE_REPORT")
        if report is not None:
            wins = sum(1 for row in harness.compare_filters(report) if row["better"] == "enkf")
            st.metric("State dengan EnKF lebih baik", f"{wins} / {len(STATE_NAMES)}")
            st.caption(f"{report.trials} percobaan, seed {report.seed}")
        else:
            st.caption("Belum ada hasil perbandingan.")

        st.divider()
        st.info("💡 Tips: Atur parameter di halaman Pengaturan, lalu jalankan perbandingan di dashboard.")

    # --- ROUTING ---
    if menu == "🏆 Dashboard Perbandingan":
        st.title("🏆 Dashboard Perbandingan UKF vs EnKF")
        st.markdown("### MSE median per state dari percobaan Monte-Carlo dengan seed tetap.")
        st.divider()

        col1, col2, col3 = st.columns(3)
        with col1:
            trials = st.number_input("Jumlah percobaan", min_value=1, max_value=101,
                                     value=config.get_int("experiment.trials"), step=2)
        with col2:
            noise_label = st.selectbox("Noise", ["mixture", "gaussian"],
                                       format_func=lambda s: "Campuran Gaussian" if s == "mixture" else "Gaussian setara")
        with col3:
            workers = st.number_input("Worker", min_value=0, max_value=64,
                                      value=config.get_int("experiment.workers"))

        if st.button("▶️ Jalankan Perbandingan", type="primary"):
            try:
                config.set_value("experiment.trials", int(trials))
                cfg = config.build_experiment_config()
                with st.spinner(f"Menjalankan {int(trials)} percobaan..."):
                    reports = harness.run_noise_comparison(cfg, workers=int(workers), labels=[noise_label])
                st.session_state["DSE_REPORT"] = reports[noise_label]
            except Exception as e:
                st.error(f"Perbandingan gagal: {e}")

        report = st.session_state.get("DSE_REPORT")
        if report is None:
            st.info("Tekan tombol di atas untuk memulai.")
            return

        rows = harness.compare_filters(report)
        df = pd.DataFrame(rows)
        df["state"] = df["state"].map(STATE_TITLES)
        df["Kategori"] = df["better"].apply(lambda b: "🟢 EnKF lebih baik" if b == "enkf" else "🔴 UKF lebih baik")
        df = df.rename(columns={"state": "State", "ukf": "MSE UKF", "enkf": "MSE EnKF", "ratio": "Rasio UKF/EnKF"})
        st.dataframe(
            df[["State", "MSE UKF", "MSE EnKF", "Rasio UKF/EnKF", "Kategori"]].style.format(
                {"MSE UKF": "{:.3e}", "MSE EnKF": "{:.3e}", "Rasio UKF/EnKF": "{:.2f}"}),
            use_container_width=True,
            hide_index=True
        )

        col1, col2 = st.columns(2)
        for kind, col in zip(report.filters, (col1, col2)):
            mean_ms, p95_ms = report.timing[kind]
            with col:
                st.metric(f"Waktu langkah {kind.upper()}", f"{mean_ms:.2f} ms",
                          delta=f"p95 {p95_ms:.2f} ms", delta_color="off")

        st.divider()
        st.subheader("📈 Estimasi State (percobaan pertama)")
        for i in range(len(STATE_NAMES)):
            c1, c2 = st.columns(2)
            with c1:
                st.plotly_chart(comparison_chart(report, i), use_container_width=True)
            with c2:
                st.plotly_chart(squared_error_chart(report, i), use_container_width=True)

    elif menu == "⚡ Simulasi":
        run_module_safely("simulasi")
    elif menu == "🎯 Estimasi":
        run_module_safely("estimasi")

    elif menu == "📉 Ukuran Ensemble":
        st.title("📉 Trade-off Ukuran Ensemble")
        st.markdown("### Akurasi EnKF terhadap biaya komputasi per langkah.")
        st.divider()

        sizes_text = st.text_input("Ukuran ensemble (dipisah koma)", "10,25,50,100")
        if st.button("▶️ Jalankan Sweep", type="primary"):
            try:
                sizes = [int(s) for s in sizes_text.split(",") if s.strip()]
                cfg = config.build_experiment_config()
                with st.spinner("Menjalankan sweep..."):
                    st.session_state["DSE_SWEEP"] = harness.sweep_ensemble_size(cfg, sizes)
            except Exception as e:
                st.error(f"Sweep gagal: {e}")

        table = st.session_state.get("DSE_SWEEP")
        if table is not None:
            pivot = table.pivot(index="ensemble_size", columns="state", values="mse")
            fig = go.Figure()
            for name in STATE_NAMES:
                fig.add_trace(go.Scatter(x=pivot.index, y=pivot[name], mode="lines+markers", name=STATE_TITLES[name]))
            fig.update_layout(xaxis_title="N", yaxis_title="MSE median", yaxis_type="log", height=350)
            st.plotly_chart(fig, use_container_width=True)
            timing = table.drop_duplicates("ensemble_size")[["ensemble_size", "mean_ms", "p95_ms"]]
            st.bar_chart(timing.set_index("ensemble_size")["mean_ms"])
            st.dataframe(table, use_container_width=True, hide_index=True)

    elif menu == "⚙️ Pengaturan":
        st.title("⚙️ Pengaturan Eksperimen")
        st.info("Semua parameter ilmiah disimpan sebagai pasangan `kunci = nilai`.")

        sections = sorted({key.split(".", 1)[0] for key in DEFAULT_VALUES})
        for section in sections:
            with st.expander(section):
                for key in [k for k in DEFAULT_VALUES if k.startswith(section + ".")]:
                    value = st.text_input(key, config.get_value(key), key=f"cfg_{key}")
                    if value != config.get_value(key):
                        config.set_value(key, value)

        with st.expander("Data Pengaturan"):
            summary = config.get_data_summary()
            st.write(f"Jumlah kunci: {summary['total_fields']}")
            st.write(f"Kunci yang diubah: {', '.join(summary['changed_fields']) or '-'}")

            col1, col2 = st.columns(2)
            with col1:
                if st.button("Reset ke Default"):
                    config.reset_data()
                    for key in DEFAULT_VALUES:
                        st.session_state.pop(f"cfg_{key}", None)
                    st.success("Pengaturan berhasil direset")
                    st.rerun()
            with col2:
                if st.button("Validasi"):
                    errors = config.validate_data()
                    if errors:
                        for section, message in errors.items():
                            st.error(f"- {message}")
                        st.warning("⚠️ Ada masalah dengan pengaturan, lihat pesan di atas")
                    else:
                        st.success("✅ Pengaturan valid - tidak ada masalah ditemukan")

        with st.expander("Simpan/Muat Pengaturan"):
            filename = st.text_input("Nama file untuk menyimpan/memuat:", "dse.conf")
            col1, col2 = st.columns(2)

            with col1:
                if st.button("💾 Simpan"):
                    try:
                        path = config.save_to_file(filename)
                        st.success(f"Pengaturan berhasil disimpan ke {path}")
                    except OSError as e:
                        st.error(f"Gagal menyimpan: {e}")

            with col2:
                if st.button("📂 Muat"):
                    try:
                        config.load_from_file(filename)
                        for key in DEFAULT_VALUES:
                            st.session_state.pop(f"cfg_{key}", None)
                        st.success(f"Pengaturan berhasil dimuat dari {filename}")
                        st.rerun()
                    except (OSError, ConfigError) as e:
                        st.error(f"Gagal memuat: {e}")

if __name__ == "__main__":
    main()
