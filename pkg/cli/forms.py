from django import forms
from django.conf import settings

from forward.traces import is_power_of_two
from medium.services import DELTA_MAX, SQRT2
from spectral.services import OMEGA2_RATIO_RANGE

SCENARIOS = {
    'reference-low': 1e-8,
    'reference-high': 1e-4,
}


class ScenarioForm(forms.Form):
    """Command-line options shared by simulate, invert, verify and compare."""
    profile = forms.CharField(required=False)
    scenario = forms.ChoiceField(required=False, choices=[('', '')] + [(k, k) for k in SCENARIOS])
    out = forms.CharField(required=False)
    traces = forms.CharField(required=False)
    report = forms.CharField(required=False)
    samples = forms.IntegerField(required=False, min_value=2)
    dt = forms.FloatField(required=False)
    fc = forms.FloatField(required=False)
    omega2_ratio = forms.FloatField(required=False)
    mu = forms.FloatField(required=False)
    max_layers = forms.IntegerField(required=False, min_value=0)
    delta = forms.FloatField(required=False)
    threads = forms.IntegerField(required=False, min_value=1)
    nz = forms.IntegerField(required=False, min_value=1)
    seed = forms.IntegerField(required=False)
    sweep = forms.IntegerField(required=False, min_value=0)
    paper_scale = forms.BooleanField(required=False)

    def clean_samples(self):
        samples = self.cleaned_data.get('samples')
        if samples is not None and not is_power_of_two(samples):
            raise forms.ValidationError(f"Sample count must be a power of two, got {samples}.")
        return samples

    def clean_dt(self):
        dt = self.cleaned_data.get('dt')
        if dt is None:
            return settings.GPR_DT
        if dt <= 0:
            raise forms.ValidationError("Time step must be positive.")
        return dt

    def clean_fc(self):
        fc = self.cleaned_data.get('fc')
        if fc is None:
            return settings.GPR_CENTRAL_FREQUENCY
        if fc <= 0:
            raise forms.ValidationError("Central frequency must be positive.")
        return fc

    def clean_omega2_ratio(self):
        ratio = self.cleaned_data.get('omega2_ratio')
        if ratio is None:
            ratio = settings.GPR_OMEGA2_RATIO
        low, high = OMEGA2_RATIO_RANGE
        if not low - 1e-15 <= ratio <= high + 1e-15:
            raise forms.ValidationError(f"omega2/omega1 must lie in [{low}, {high:.6f}], got {ratio}.")
        return ratio

    def clean_mu(self):
        mu = self.cleaned_data.get('mu')
        if mu is None:
            return 1.0
        if mu <= 0:
            raise forms.ValidationError("Relative permeability must be positive.")
        return mu

    def clean_delta(self):
        delta = self.cleaned_data.get('delta')
        if delta is None:
            delta = settings.GPR_DELTA
        if not 0 < delta <= DELTA_MAX + 1e-15:
            raise forms.ValidationError(f"delta must lie in (0, {SQRT2 - 1:.6f}], got {delta}.")
        return delta

    def clean(self):
        cleaned_data = super().clean()
        if cleaned_data.get('samples') is None:
            cleaned_data['samples'] = (settings.GPR_FULL_SCALE_SAMPLES if cleaned_data.get('paper_scale')
                                       else settings.GPR_SAMPLES)
        if cleaned_data.get('max_layers') is None:
            cleaned_data['max_layers'] = 10
        if cleaned_data.get('seed') is None:
            cleaned_data['seed'] = settings.GPR_SEED
        if cleaned_data.get('profile') and cleaned_data.get('scenario'):
            raise forms.ValidationError("Give either --profile or --scenario, not both.")
        return cleaned_data
