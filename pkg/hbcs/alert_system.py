import json
import logging
from datetime import datetime
from pathlib import Path

import numpy as np


class AlertSystem:
    """Raises diagnostics alerts for certificates and transfer evaluations"""

    def __init__(self, data_dir=None, thresholds=None):
        self.alerts_dir = None
        if data_dir is not None:
            self.alerts_dir = Path(data_dir) / "alerts"
            self.alerts_dir.mkdir(parents=True, exist_ok=True)

        self.logger = logging.getLogger(__name__)

        # Alert thresholds
        self.thresholds = {
            'borderline_margin': 1e-9,          # condition value in [1 - margin, 1)
            'k_condition_warning': 1e6,         # cond(K) above this is suspicious
            'k_condition_limit': 1e10,          # cond(K) above this voids the certificate
            'resolvent_condition_warning': 1e8,
            'resolvent_condition_limit': 1e12,
            'contraction_tol': 1e-10,
        }
        if thresholds:
            self.thresholds.update(thresholds)

    def check_certificate(self, report):
        """Check a CertificateReport for borderline or unreliable evidence"""
        try:
            alerts = []
            details = report.details

            for check in (self._check_borderline, self._check_k_condition,
                          self._check_contraction_margin, self._check_p0d_gate):
                alert = check(report, details)
                if alert:
                    alerts.append(alert)

            if alerts:
                self._save_alerts(alerts)
            return alerts

        except Exception as e:
            self.logger.error(f"Error checking certificate alerts: {e}")
            return []

    def check_transfer(self, sample):
        """Check a TransferSample for an ill-conditioned boundary matrix"""
        try:
            condition = sample.boundary_condition_number
            if condition < self.thresholds['resolvent_condition_warning']:
                return []

            severity = 'critical' if condition >= self.thresholds['resolvent_condition_limit'] else 'warning'
            alert = {
                'id': f"resolvent_{sample.s.real:.6g}_{sample.s.imag:.6g}",
                'type': 'Resolvent Conditioning',
                'severity': severity,
                'message': f"boundary matrix at s={sample.s:.6g} has condition number {condition:.3e}",
                'timestamp': datetime.now(),
                'data': {'s': [sample.s.real, sample.s.imag], 'condition': condition}
            }
            self._save_alerts([alert])
            return [alert]

        except Exception as e:
            self.logger.error(f"Error checking transfer alerts: {e}")
            return []

    def _check_borderline(self, report, details):
        """Conditions that fall short of 1 by less than the strictness margin"""
        margin = self.thresholds['borderline_margin']
        candidates = {
            'cond1_inf_norm': details.get('m_inf'),
            'cond2_abs_series': details.get('rho_abs'),
        }
        table = details.get('row_sums_by_k') or []
        if table:
            candidates['cond3_k0'] = min(max(rows) for rows in table)

        borderline = {name: value for name, value in candidates.items()
                      if value is not None and 1 - margin <= value < 1}
        if not borderline:
            return None

        names = ", ".join(f"{name}={value:.15g}" for name, value in borderline.items())
        return {
            'id': 'borderline_condition',
            'type': 'Borderline Condition',
            'severity': 'warning',
            'message': f"borderline condition value within {margin:g} of 1, not used as a certificate: {names}",
            'timestamp': datetime.now(),
            'data': borderline
        }

    def _check_k_condition(self, report, details):
        condition = details.get('K_condition')
        if condition is None or condition < self.thresholds['k_condition_warning']:
            return None

        severity = 'critical' if condition >= self.thresholds['k_condition_limit'] else 'warning'
        return {
            'id': 'k_condition',
            'type': 'Ill-conditioned K',
            'severity': severity,
            'message': f"K is ill-conditioned (cond {condition:.3e}); K^-1 amplifies total-variation bounds",
            'timestamp': datetime.now(),
            'data': {'K_condition': condition}
        }

    def _check_contraction_margin(self, report, details):
        margin = report.contraction_margin
        if margin is None or margin >= -self.thresholds['contraction_tol']:
            return None

        return {
            'id': 'contraction_margin',
            'type': 'Negative Contraction Margin',
            'severity': 'info',
            'message': f"contraction form is indefinite (smallest eigenvalue {margin:.6g}); ||M||_2 > 1",
            'timestamp': datetime.now(),
            'data': {'contraction_margin': margin}
        }

    def _check_p0d_gate(self, report, details):
        if details.get('P0D_is_zero', True):
            return None

        residual = details.get('P0D_residual', float('nan'))
        return {
            'id': 'p0d_gate',
            'type': 'P0D Gate',
            'severity': 'warning',
            'message': f"P0^D does not vanish (max norm {residual:.3e}); the delay-measure certificates do not apply",
            'timestamp': datetime.now(),
            'data': {'P0D_residual': residual}
        }

    def _save_alerts(self, alerts):
        """Save alerts to file"""
        if self.alerts_dir is None:
            return
        try:
            timestamp = datetime.now().strftime('%Y%m%d_%H%M%S_%f')
            alerts_file = self.alerts_dir / f"alerts_{timestamp}.json"

            alerts_json = []
            for alert in alerts:
                alert_copy = alert.copy()
                alert_copy['timestamp'] = alert_copy['timestamp'].isoformat()
                alerts_json.append(alert_copy)

            with open(alerts_file, 'w') as f:
                json.dump(alerts_json, f, indent=2, default=_to_builtin)

            self.logger.info(f"Saved {len(alerts)} alerts to {alerts_file}")

        except Exception as e:
            self.logger.error(f"Error saving alerts: {e}")

    def load_alerts(self):
        """All saved alerts, newest first, one per id"""
        if self.alerts_dir is None:
            return []
        alerts = []
        for alert_file in sorted(self.alerts_dir.glob("alerts_*.json"), reverse=True):
            try:
                with open(alert_file, 'r') as f:
                    alerts.extend(json.load(f))
            except Exception as e:
                self.logger.error(f"Error reading alert file {alert_file}: {e}")
                continue

        seen_ids = set()
        unique_alerts = []
        for alert in alerts:
            if alert['id'] not in seen_ids:
                unique_alerts.append(alert)
                seen_ids.add(alert['id'])
        return unique_alerts

    def get_alert_summary(self, alerts):
        """Counts by severity and type"""
        summary = {
            'total_alerts': len(alerts),
            'critical_alerts': len([a for a in alerts if a['severity'] == 'critical']),
            'warning_alerts': len([a for a in alerts if a['severity'] == 'warning']),
            'alert_types': {}
        }
        for alert in alerts:
            alert_type = alert['type']
            summary['alert_types'][alert_type] = summary['alert_types'].get(alert_type, 0) + 1
        return summary


def _to_builtin(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")
