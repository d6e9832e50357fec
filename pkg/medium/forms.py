from django import forms

from .exceptions import ProfileFormatError
from .profile import MediumProfile


class LayerForm(forms.Form):
    """One entry of the profile's layers array."""
    thickness_m = forms.FloatField()
    eps_top = forms.FloatField(min_value=1.0)
    eps_slope_per_m = forms.FloatField(required=False)
    sigma_top_S_per_m = forms.FloatField(required=False, min_value=0.0)
    sigma_slope_per_m = forms.FloatField(required=False)

    def clean_thickness_m(self):
        thickness = self.cleaned_data.get('thickness_m')
        if thickness is not None and thickness <= 0:
            raise forms.ValidationError("Layer thickness must be positive.")
        return thickness

    def clean(self):
        cleaned_data = super().clean()
        for name in ('eps_slope_per_m', 'sigma_top_S_per_m', 'sigma_slope_per_m'):
            if cleaned_data.get(name) is None:
                cleaned_data[name] = 0.0
        return cleaned_data


class ProfileForm(forms.Form):
    """Top-level profile object: mu, eps_substrate and the layers array."""
    mu = forms.FloatField(required=False)
    eps_substrate = forms.FloatField(min_value=1.0)

    def clean_mu(self):
        mu = self.cleaned_data.get('mu')
        if mu is None:
            return 1.0
        if mu <= 0:
            raise forms.ValidationError("Relative permeability must be positive.")
        return mu

    @classmethod
    def parse(cls, data) -> MediumProfile:
        """Validate decoded JSON and build the profile."""
        if not isinstance(data, dict):
            raise ProfileFormatError("Profile JSON must be an object")
        layers = data.get('layers')
        if not isinstance(layers, list):
            raise ProfileFormatError("Profile JSON needs a 'layers' array")

        form = cls(data)
        if not form.is_valid():
            raise ProfileFormatError(f"Invalid profile: {form.errors.as_text()}")

        cleaned_layers = []
        for i, item in enumerate(layers):
            if not isinstance(item, dict):
                raise ProfileFormatError(f"Layer {i} must be an object")
            layer_form = LayerForm(item)
            if not layer_form.is_valid():
                raise ProfileFormatError(f"Invalid layer {i}: {layer_form.errors.as_text()}")
            cleaned_layers.append(layer_form.cleaned_data)

        return MediumProfile.from_dict({
            'mu': form.cleaned_data['mu'],
            'eps_substrate': form.cleaned_data['eps_substrate'],
            'layers': cleaned_layers,
        })
